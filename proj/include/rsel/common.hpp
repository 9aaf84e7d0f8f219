#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rsel {

// Base class for every error thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// File missing, short read, bad magic and friends.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Malformed textual input (ROI files, hex keys).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& msg) : Error(msg) {}
};

// Payload or container that cannot be decoded.
class CorruptStreamError : public Error {
public:
    explicit CorruptStreamError(const std::string& msg) : Error(msg) {}
};

// Argument outside its documented domain.
class RangeError : public Error {
public:
    explicit RangeError(const std::string& msg) : Error(msg) {}
};

// Half-open pixel rectangle [x1,x2) x [y1,y2), 0-based.
struct PixelRegion {
    int x1 = 0;
    int y1 = 0;
    int x2 = 0;
    int y2 = 0;

    int width() const { return x2 - x1; }
    int height() const { return y2 - y1; }
    long long area() const { return (long long)width() * height(); }
    bool empty() const { return x2 <= x1 || y2 <= y1; }

    bool contains(int x, int y) const { return x >= x1 && x < x2 && y >= y1 && y < y2; }

    bool intersects(const PixelRegion& o) const {
        return x1 < o.x2 && o.x1 < x2 && y1 < o.y2 && o.y1 < y2;
    }

    PixelRegion clipped(int w, int h) const {
        PixelRegion r = *this;
        if (r.x1 < 0) r.x1 = 0;
        if (r.y1 < 0) r.y1 = 0;
        if (r.x2 > w) r.x2 = w;
        if (r.y2 > h) r.y2 = h;
        if (r.x2 < r.x1) r.x2 = r.x1;
        if (r.y2 < r.y1) r.y2 = r.y1;
        return r;
    }

    bool operator==(const PixelRegion&) const = default;
};

template <class T>
inline T clip3(T lo, T hi, T v) {
    return v < lo ? lo : (v > hi ? hi : v);
}

inline uint8_t clip_pixel(int v) {
    return (uint8_t)clip3(0, 255, v);
}

// FNV-1a, used for position hashing and content fingerprints.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const uint8_t* p = (const uint8_t*)data;
    for (size_t i = 0; i < n; i++) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline uint64_t fnv1a64_mix(uint64_t h, uint64_t v) {
    for (int i = 0; i < 8; i++) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline int ceil_div(int a, int b) {
    return (a + b - 1) / b;
}

// Smallest n with 2^n >= m (m >= 1).
inline int bits_for(uint32_t m) {
    int n = 0;
    while ((1u << n) < m) n++;
    return n;
}

}  // namespace rsel
