#pragma once

// Bin-string binarizations: k-th order Exp-Golomb, truncated Rice and
// fixed-length codes. A bin string is a plain bit vector; entropy mode
// (regular vs bypass) is assigned by the caller at coding time.
//
// EG_k layout: m zeros, a terminating one, then m+k info bits. The info
// bits are the "suffix"; flipping suffix bits keeps the code length, which
// is what makes suffix-level encryption bitrate-neutral.
//
// TR_k layout: q = v>>k ones where q < cMax>>k, a terminating zero and k
// remainder bits. When q reaches the cap the terminator and remainder are
// omitted (escape form; the excess is carried by a separate code).

#include <vector>

#include "rsel/common.hpp"

namespace rsel {

using BinString = std::vector<uint8_t>;

struct EgDecoded {
    uint32_t value = 0;
    int prefix_len = 0;  // zeros + terminator
    int suffix_len = 0;  // m + k info bits
};

inline int eg_suffix_len(uint32_t v, int k) {
    int kk = k;
    while (v >= (1u << kk)) {
        v -= 1u << kk;
        kk++;
        if (kk > 40) throw RangeError("eg_suffix_len: value out of domain");
    }
    return kk;
}

// Decomposes v into its EG_k prefix class and suffix value.
inline void eg_split(uint32_t v, int k, int* suffix_len, uint32_t* suffix) {
    int kk = k;
    uint32_t vv = v;
    while (vv >= (1u << kk)) {
        vv -= 1u << kk;
        kk++;
        if (kk > 40) throw RangeError("eg_split: value out of domain");
    }
    *suffix_len = kk;
    *suffix = vv;
}

// Rebuilds a value in the same prefix class from a replacement suffix.
inline uint32_t eg_join(uint32_t v, int k, uint32_t new_suffix) {
    int slen;
    uint32_t old;
    eg_split(v, k, &slen, &old);
    return v - old + new_suffix;
}

inline BinString eg_encode(uint32_t v, int k) {
    if (k < 0 || k > 16) throw RangeError("eg_encode: order " + std::to_string(k));
    BinString bins;
    uint32_t vv = v;
    int kk = k;
    while (vv >= (1u << kk)) {
        bins.push_back(0);
        vv -= 1u << kk;
        kk++;
    }
    bins.push_back(1);
    for (int i = kk - 1; i >= 0; i--) bins.push_back((vv >> i) & 1);
    return bins;
}

template <class NextBit>
EgDecoded eg_decode_full(NextBit&& next, int k) {
    EgDecoded d;
    int m = 0;
    while (next() == 0) {
        m++;
        if (m > 32) throw CorruptStreamError("eg_decode: runaway prefix");
    }
    d.prefix_len = m + 1;
    d.suffix_len = m + k;
    uint32_t suffix = 0;
    for (int i = 0; i < d.suffix_len; i++) suffix = (suffix << 1) | (next() & 1);
    d.value = (((1u << m) - 1) << k) + suffix;
    return d;
}

template <class NextBit>
uint32_t eg_decode(NextBit&& next, int k) {
    return eg_decode_full(next, k).value;
}

struct TrDecoded {
    uint32_t value = 0;
    bool escaped = false;  // prefix hit the cap; value = (cMax>>k)<<k
};

// Requires v <= cMax. At the cap (v>>k == cMax>>k) only the escape value
// (cMax>>k)<<k is representable; larger remainders belong to the escape code.
inline BinString tr_encode(uint32_t v, int k, uint32_t cmax) {
    if (k < 0 || k > 16) throw RangeError("tr_encode: order " + std::to_string(k));
    if (v > cmax)
        throw RangeError("tr_encode: value " + std::to_string(v) + " exceeds cMax " +
                         std::to_string(cmax));
    uint32_t cap = cmax >> k;
    uint32_t q = v >> k;
    BinString bins;
    if (q >= cap) {
        if (v != (cap << k))
            throw RangeError("tr_encode: value " + std::to_string(v) +
                             " not representable at cap (use the escape code)");
        for (uint32_t i = 0; i < cap; i++) bins.push_back(1);
        return bins;
    }
    for (uint32_t i = 0; i < q; i++) bins.push_back(1);
    bins.push_back(0);
    for (int i = k - 1; i >= 0; i--) bins.push_back((v >> i) & 1);
    return bins;
}

template <class NextBit>
TrDecoded tr_decode_full(NextBit&& next, int k, uint32_t cmax) {
    uint32_t cap = cmax >> k;
    uint32_t q = 0;
    while (q < cap && next() == 1) q++;
    TrDecoded d;
    if (q == cap) {
        d.value = cap << k;
        d.escaped = true;
        return d;
    }
    uint32_t r = 0;
    for (int i = 0; i < k; i++) r = (r << 1) | (next() & 1);
    d.value = (q << k) | r;
    return d;
}

template <class NextBit>
uint32_t tr_decode(NextBit&& next, int k, uint32_t cmax) {
    return tr_decode_full(next, k, cmax).value;
}

// Fixed-length code, MSB first.
inline BinString fl_encode(uint32_t v, int n_bits) {
    if (n_bits < 0 || n_bits > 32) throw RangeError("fl_encode: width " + std::to_string(n_bits));
    if (n_bits < 32 && v >= (1ull << n_bits))
        throw RangeError("fl_encode: value " + std::to_string(v) + " needs more than " +
                         std::to_string(n_bits) + " bits");
    BinString bins;
    for (int i = n_bits - 1; i >= 0; i--) bins.push_back((v >> i) & 1);
    return bins;
}

template <class NextBit>
uint32_t fl_decode(NextBit&& next, int n_bits) {
    uint32_t v = 0;
    for (int i = 0; i < n_bits; i++) v = (v << 1) | (next() & 1);
    return v;
}

// Reader over a materialized bin string (tests and standalone use).
class BinStringReader {
public:
    explicit BinStringReader(const BinString& bins) : bins_(bins) {}

    int operator()() {
        if (pos_ >= bins_.size()) throw CorruptStreamError("bin string exhausted mid-symbol");
        return bins_[pos_++];
    }

    size_t pos() const { return pos_; }
    bool exhausted() const { return pos_ >= bins_.size(); }

private:
    const BinString& bins_;
    size_t pos_ = 0;
};

}  // namespace rsel
