#pragma once

// Little-endian primitives shared by the dataset and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "conserve/error.hpp"

namespace conserve::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_bytes(out, &v, sizeof v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_bytes(out, &v, sizeof v); }
inline void write_f64(std::ostream& out, double v) { write_bytes(out, &v, sizeof v); }
inline void write_f64s(std::ostream& out, std::span<const double> v) { write_bytes(out, v.data(), v.size_bytes()); }

class Reader {
public:
    Reader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

    void bytes(void* p, std::size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw DataError(what_ + ": truncated file");
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        bytes(&v, sizeof v);
        return v;
    }
    double f64() {
        double v;
        bytes(&v, sizeof v);
        return v;
    }
    void f64s(std::span<double> v) { bytes(v.data(), v.size_bytes()); }

    void expect_magic(const char* magic) {
        const std::size_t n = std::strlen(magic);
        std::string got(n, '\0');
        in_.read(got.data(), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n || got != magic) {
            throw DataError(what_ + ": bad magic (expected " + magic + ")");
        }
    }
    bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
    std::string what_;
};

}  // namespace conserve::detail
