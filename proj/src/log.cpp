#include "conserve/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <unistd.h>

namespace conserve::log {

bool color_enabled() {
    const char* no_color = std::getenv("NO_COLOR");
    if (no_color != nullptr && no_color[0] != '\0') return false;
    return isatty(fileno(stderr)) != 0;
}

std::string format(Level level, const std::string& message, bool color) {
    const char* name = level == Level::Info ? "info" : level == Level::Warn ? "warning" : "error";
    const char* code = level == Level::Info ? "\033[32m" : level == Level::Warn ? "\033[33m" : "\033[31m";
    std::string out = "conserve: ";
    if (color) {
        out += code;
        out += name;
        out += "\033[0m";
    } else {
        out += name;
    }
    return out + ": " + message;
}

void write(Level level, const std::string& message) { std::cerr << format(level, message, color_enabled()) << '\n'; }

}  // namespace conserve::log
