#pragma once

#include <string>

namespace conserve::log {

enum class Level { Info, Warn, Error };

/// Colour is used only when stderr is a terminal and NO_COLOR is unset or empty.
bool color_enabled();

/// Writes "conserve: <level>: <message>" to stderr.
void write(Level level, const std::string& message);

inline void info(const std::string& m) { write(Level::Info, m); }
inline void warn(const std::string& m) { write(Level::Warn, m); }
inline void error(const std::string& m) { write(Level::Error, m); }

/// One formatted log line; exposed for tests.
std::string format(Level level, const std::string& message, bool color);

}  // namespace conserve::log
