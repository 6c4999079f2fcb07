#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "gaborcomp/common.hpp"

// Little-endian stream helpers. All file formats in this project are
// written through these, so the on-disk layout never depends on host
// endianness or struct padding.

namespace gaborcomp::bytes {

inline void put_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void put_u8(std::ostream& out, uint8_t v) { put_bytes(out, &v, 1); }

inline void put_u16(std::ostream& out, uint16_t v) {
    const uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    put_bytes(out, b, 2);
}

inline void put_u32(std::ostream& out, uint32_t v) {
    const uint8_t b[4] = {
        static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    put_bytes(out, b, 4);
}

inline void put_u64(std::ostream& out, uint64_t v) {
    put_u32(out, static_cast<uint32_t>(v));
    put_u32(out, static_cast<uint32_t>(v >> 32));
}

inline void put_f32(std::ostream& out, float v) {
    put_u32(out, std::bit_cast<uint32_t>(v));
}

inline void put_f64(std::ostream& out, double v) {
    put_u64(out, std::bit_cast<uint64_t>(v));
}

inline void get_bytes(std::istream& in, void* p, size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
        throw DecodeError(std::string("truncated input while reading ") + what);
}

inline uint8_t get_u8(std::istream& in, const char* what = "u8") {
    uint8_t v;
    get_bytes(in, &v, 1, what);
    return v;
}

inline uint16_t get_u16(std::istream& in, const char* what = "u16") {
    uint8_t b[2];
    get_bytes(in, b, 2, what);
    return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

inline uint32_t get_u32(std::istream& in, const char* what = "u32") {
    uint8_t b[4];
    get_bytes(in, b, 4, what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

inline uint64_t get_u64(std::istream& in, const char* what = "u64") {
    const uint64_t lo = get_u32(in, what);
    const uint64_t hi = get_u32(in, what);
    return lo | (hi << 32);
}

inline float get_f32(std::istream& in, const char* what = "f32") {
    return std::bit_cast<float>(get_u32(in, what));
}

inline double get_f64(std::istream& in, const char* what = "f64") {
    return std::bit_cast<double>(get_u64(in, what));
}

}  // namespace gaborcomp::bytes
