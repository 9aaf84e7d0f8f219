#pragma once

// Keyed pseudo-random bit source: AES-128 in counter mode. One master key
// drives two domain-separated lanes:
//   - element cipher draws:  AES_K(nonce || ctr), ctr monotone per session
//   - chaotic map seeding:   AES_K((nonce ^ CHAOS_DOMAIN) || (frame,tu))
// so no counter block is ever used twice within a session.

#include <array>
#include <cstring>

#include "rsel/common.hpp"

namespace rsel {

namespace detail {

static const uint8_t aes_sbox[256] = {
    0x63, 0x7c, 0x77, 0x7b, 0xf2, 0x6b, 0x6f, 0xc5, 0x30, 0x01, 0x67, 0x2b, 0xfe, 0xd7, 0xab,
    0x76, 0xca, 0x82, 0xc9, 0x7d, 0xfa, 0x59, 0x47, 0xf0, 0xad, 0xd4, 0xa2, 0xaf, 0x9c, 0xa4,
    0x72, 0xc0, 0xb7, 0xfd, 0x93, 0x26, 0x36, 0x3f, 0xf7, 0xcc, 0x34, 0xa5, 0xe5, 0xf1, 0x71,
    0xd8, 0x31, 0x15, 0x04, 0xc7, 0x23, 0xc3, 0x18, 0x96, 0x05, 0x9a, 0x07, 0x12, 0x80, 0xe2,
    0xeb, 0x27, 0xb2, 0x75, 0x09, 0x83, 0x2c, 0x1a, 0x1b, 0x6e, 0x5a, 0xa0, 0x52, 0x3b, 0xd6,
    0xb3, 0x29, 0xe3, 0x2f, 0x84, 0x53, 0xd1, 0x00, 0xed, 0x20, 0xfc, 0xb1, 0x5b, 0x6a, 0xcb,
    0xbe, 0x39, 0x4a, 0x4c, 0x58, 0xcf, 0xd0, 0xef, 0xaa, 0xfb, 0x43, 0x4d, 0x33, 0x85, 0x45,
    0xf9, 0x02, 0x7f, 0x50, 0x3c, 0x9f, 0xa8, 0x51, 0xa3, 0x40, 0x8f, 0x92, 0x9d, 0x38, 0xf5,
    0xbc, 0xb6, 0xda, 0x21, 0x10, 0xff, 0xf3, 0xd2, 0xcd, 0x0c, 0x13, 0xec, 0x5f, 0x97, 0x44,
    0x17, 0xc4, 0xa7, 0x7e, 0x3d, 0x64, 0x5d, 0x19, 0x73, 0x60, 0x81, 0x4f, 0xdc, 0x22, 0x2a,
    0x90, 0x88, 0x46, 0xee, 0xb8, 0x14, 0xde, 0x5e, 0x0b, 0xdb, 0xe0, 0x32, 0x3a, 0x0a, 0x49,
    0x06, 0x24, 0x5c, 0xc2, 0xd3, 0xac, 0x62, 0x91, 0x95, 0xe4, 0x79, 0xe7, 0xc8, 0x37, 0x6d,
    0x8d, 0xd5, 0x4e, 0xa9, 0x6c, 0x56, 0xf4, 0xea, 0x65, 0x7a, 0xae, 0x08, 0xba, 0x78, 0x25,
    0x2e, 0x1c, 0xa6, 0xb4, 0xc6, 0xe8, 0xdd, 0x74, 0x1f, 0x4b, 0xbd, 0x8b, 0x8a, 0x70, 0x3e,
    0xb5, 0x66, 0x48, 0x03, 0xf6, 0x0e, 0x61, 0x35, 0x57, 0xb9, 0x86, 0xc1, 0x1d, 0x9e, 0xe1,
    0xf8, 0x98, 0x11, 0x69, 0xd9, 0x8e, 0x94, 0x9b, 0x1e, 0x87, 0xe9, 0xce, 0x55, 0x28, 0xdf,
    0x8c, 0xa1, 0x89, 0x0d, 0xbf, 0xe6, 0x42, 0x68, 0x41, 0x99, 0x2d, 0x0f, 0xb0, 0x54, 0xbb,
    0x16};

inline uint8_t aes_xtime(uint8_t x) {
    return (uint8_t)((x << 1) ^ ((x >> 7) * 0x1b));
}

// Encrypt-only AES-128 (the only direction CTR mode needs).
class Aes128 {
public:
    explicit Aes128(const uint8_t key[16]) {
        static const uint8_t rcon[10] = {0x01, 0x02, 0x04, 0x08, 0x10,
                                         0x20, 0x40, 0x80, 0x1b, 0x36};
        std::memcpy(rk_, key, 16);
        for (int i = 4; i < 44; i++) {
            uint8_t t[4];
            std::memcpy(t, rk_ + 4 * (i - 1), 4);
            if (i % 4 == 0) {
                uint8_t t0 = t[0];
                t[0] = (uint8_t)(aes_sbox[t[1]] ^ rcon[i / 4 - 1]);
                t[1] = aes_sbox[t[2]];
                t[2] = aes_sbox[t[3]];
                t[3] = aes_sbox[t0];
            }
            for (int j = 0; j < 4; j++) rk_[4 * i + j] = rk_[4 * (i - 4) + j] ^ t[j];
        }
    }

    void encrypt_block(const uint8_t in[16], uint8_t out[16]) const {
        uint8_t s[16];
        for (int i = 0; i < 16; i++) s[i] = in[i] ^ rk_[i];
        for (int round = 1; round <= 10; round++) {
            uint8_t t[16];
            // SubBytes + ShiftRows in one pass (column-major state).
            for (int c = 0; c < 4; c++)
                for (int r = 0; r < 4; r++) t[r + 4 * c] = aes_sbox[s[r + 4 * ((c + r) & 3)]];
            if (round < 10) {
                for (int c = 0; c < 4; c++) {
                    uint8_t a0 = t[4 * c], a1 = t[4 * c + 1], a2 = t[4 * c + 2], a3 = t[4 * c + 3];
                    uint8_t x = (uint8_t)(a0 ^ a1 ^ a2 ^ a3);
                    s[4 * c] = (uint8_t)(a0 ^ x ^ aes_xtime((uint8_t)(a0 ^ a1)));
                    s[4 * c + 1] = (uint8_t)(a1 ^ x ^ aes_xtime((uint8_t)(a1 ^ a2)));
                    s[4 * c + 2] = (uint8_t)(a2 ^ x ^ aes_xtime((uint8_t)(a2 ^ a3)));
                    s[4 * c + 3] = (uint8_t)(a3 ^ x ^ aes_xtime((uint8_t)(a3 ^ a0)));
                }
            } else {
                std::memcpy(s, t, 16);
            }
            for (int i = 0; i < 16; i++) s[i] ^= rk_[16 * round + i];
        }
        std::memcpy(out, s, 16);
    }

private:
    uint8_t rk_[176];
};

inline void put_be64(uint8_t* p, uint64_t v) {
    for (int i = 0; i < 8; i++) p[i] = (uint8_t)(v >> (56 - 8 * i));
}

}  // namespace detail

struct StreamKey {
    std::array<uint8_t, 16> bytes{};

    static StreamKey from_hex(const std::string& hex) {
        if (hex.size() != 32)
            throw ParseError("key must be 32 hex characters, got " + std::to_string(hex.size()));
        StreamKey k;
        for (size_t i = 0; i < 16; i++) {
            auto nyb = [&](char c) -> int {
                if (c >= '0' && c <= '9') return c - '0';
                if (c >= 'a' && c <= 'f') return c - 'a' + 10;
                if (c >= 'A' && c <= 'F') return c - 'A' + 10;
                throw ParseError("key contains a non-hex character");
            };
            k.bytes[i] = (uint8_t)((nyb(hex[2 * i]) << 4) | nyb(hex[2 * i + 1]));
        }
        return k;
    }

    bool operator==(const StreamKey&) const = default;
};

struct U128 {
    uint64_t hi = 0, lo = 0;
};

// Logistic map parameters; r in [3.9, 4.0), x0 in (eps, 1-eps) away from
// the fixed/periodic dyadics {0, 0.25, 0.5, 0.75, 1}.
struct ChaoticParams {
    double x0 = 0.5;
    double r = 3.99;

    bool operator==(const ChaoticParams&) const = default;
};

class Keystream {
public:
    Keystream(const StreamKey& key, uint64_t nonce)
        : aes_(key.bytes.data()), nonce_(nonce) {}

    // n in [1,128]; bits come MSB-first out of the CTR block stream.
    U128 next_bits(int n) {
        if (n < 1 || n > 128) throw RangeError("next_bits: n = " + std::to_string(n));
        U128 out;
        for (int i = 0; i < n; i++) {
            out.hi = (out.hi << 1) | (out.lo >> 63);
            out.lo = (out.lo << 1) | (uint64_t)next_bit();
        }
        return out;
    }

    uint64_t next_bits64(int n) {
        if (n < 1 || n > 64) throw RangeError("next_bits64: n = " + std::to_string(n));
        uint64_t v = 0;
        for (int i = 0; i < n; i++) v = (v << 1) | (uint64_t)next_bit();
        return v;
    }

    uint8_t next_byte() { return (uint8_t)next_bits64(8); }

    // Unbiased draw from [0, m) by rejection sampling on ceil(log2 m) bits.
    uint32_t next_uniform(uint32_t m) {
        if (m < 1 || m > 65536) throw RangeError("next_uniform: m = " + std::to_string(m));
        if (m == 1) return 0;
        int nb = bits_for(m);
        for (;;) {
            uint32_t v = (uint32_t)next_bits64(nb);
            if (v < m) return v;
        }
    }

    uint64_t counter() const { return counter_; }

private:
    int next_bit() {
        if (bit_pos_ >= 128) refill();
        int byte = bit_pos_ >> 3;
        int bit = 7 - (bit_pos_ & 7);
        bit_pos_++;
        return (block_[byte] >> bit) & 1;
    }

    void refill() {
        uint8_t in[16];
        detail::put_be64(in, nonce_);
        detail::put_be64(in + 8, counter_++);
        aes_.encrypt_block(in, block_);
        bit_pos_ = 0;
    }

    detail::Aes128 aes_;
    uint64_t nonce_;
    uint64_t counter_ = 0;
    uint8_t block_[16] = {};
    int bit_pos_ = 128;
};

namespace detail {
// Nonce-lane separator for the chaotic-parameter derivation.
constexpr uint64_t CHAOS_DOMAIN = 0x9e3779b97f4a7c15ull;
}  // namespace detail

// Deterministic per-(key, nonce, frame, tu) logistic-map parameters. 52+52
// bits of one AES block become the x0 mantissa and the r offset.
inline ChaoticParams derive_chaotic_params(const StreamKey& key, uint64_t nonce, uint32_t frame,
                                           uint32_t tu_index) {
    detail::Aes128 aes(key.bytes.data());
    uint8_t in[16], out[16];
    detail::put_be64(in, nonce ^ detail::CHAOS_DOMAIN);
    detail::put_be64(in + 8, ((uint64_t)frame << 32) | tu_index);
    aes.encrypt_block(in, out);

    auto bits52 = [&](int start_bit) {
        uint64_t v = 0;
        for (int i = 0; i < 52; i++) {
            int b = start_bit + i;
            v = (v << 1) | ((out[b >> 3] >> (7 - (b & 7))) & 1);
        }
        return v;
    };

    const double eps = 1.0 / (1 << 20);
    double x0 = (double)bits52(0) / 4503599627370496.0;  // / 2^52
    if (x0 < eps) x0 = eps;
    if (x0 > 1.0 - eps) x0 = 1.0 - eps;
    for (double bad : {0.25, 0.5, 0.75})
        if (x0 == bad) x0 += eps;

    double r = 3.9 + 0.0999 * ((double)bits52(52) / 4503599627370496.0);

    return ChaoticParams{x0, r};
}

}  // namespace rsel
