#pragma once

// Binary arithmetic coder, H.265 M-coder flavour: 6-bit probability states,
// table-driven LPS subdivision, shift-based renormalization. Bypass bins cost
// exactly one coded bit each, which the suffix ciphers rely on.
//
// Payloads are standalone byte vectors (no start codes, no emulation
// prevention), so the coded length depends only on the bin modes and the
// regular-bin values, never on bypass values.

#include <vector>

#include "rsel/binarization.hpp"
#include "rsel/common.hpp"

namespace rsel {

namespace mcoder {

static const uint8_t LPS_table[64][4] = {
    {128, 176, 208, 240}, {128, 167, 197, 227}, {128, 158, 187, 216}, {123, 150, 178, 205},
    {116, 142, 169, 195}, {111, 135, 160, 185}, {105, 128, 152, 175}, {100, 122, 144, 166},
    {95, 116, 137, 158},  {90, 110, 130, 150},  {85, 104, 123, 142},  {81, 99, 117, 135},
    {77, 94, 111, 128},   {73, 89, 105, 122},   {69, 85, 100, 116},   {66, 80, 95, 110},
    {62, 76, 90, 104},    {59, 72, 86, 99},     {56, 69, 81, 94},     {53, 65, 77, 89},
    {51, 62, 73, 85},     {48, 59, 69, 80},     {46, 56, 66, 76},     {43, 53, 63, 72},
    {41, 50, 59, 69},     {39, 48, 56, 65},     {37, 45, 54, 62},     {35, 43, 51, 59},
    {33, 41, 48, 56},     {32, 39, 46, 53},     {30, 37, 43, 50},     {29, 35, 41, 48},
    {27, 33, 39, 45},     {26, 31, 37, 43},     {24, 30, 35, 41},     {23, 28, 33, 39},
    {22, 27, 32, 37},     {21, 26, 30, 35},     {20, 24, 29, 33},     {19, 23, 27, 31},
    {18, 22, 26, 30},     {17, 21, 25, 28},     {16, 20, 23, 27},     {15, 19, 22, 25},
    {14, 18, 21, 24},     {14, 17, 20, 23},     {13, 16, 19, 22},     {12, 15, 18, 21},
    {12, 14, 17, 20},     {11, 14, 16, 19},     {11, 13, 15, 18},     {10, 12, 15, 17},
    {10, 12, 14, 16},     {9, 11, 13, 15},      {9, 11, 12, 14},      {8, 10, 12, 14},
    {8, 9, 11, 13},       {7, 9, 11, 12},       {7, 9, 10, 12},       {7, 8, 10, 11},
    {6, 8, 9, 11},        {6, 7, 9, 10},        {6, 7, 8, 9},         {2, 2, 2, 2}};

static const uint8_t renorm_table[32] = {6, 5, 4, 4, 3, 3, 3, 3, 2, 2, 2, 2, 2, 2, 2, 2,
                                         1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1};

static const uint8_t next_state_MPS[64] = {
    1,  2,  3,  4,  5,  6,  7,  8,  9,  10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22,
    23, 24, 25, 26, 27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44,
    45, 46, 47, 48, 49, 50, 51, 52, 53, 54, 55, 56, 57, 58, 59, 60, 61, 62, 62, 63};

static const uint8_t next_state_LPS[64] = {
    0,  0,  1,  2,  2,  4,  4,  5,  6,  7,  8,  9,  9,  11, 11, 12, 13, 13, 15, 15, 16, 16,
    18, 18, 19, 19, 21, 21, 22, 22, 23, 24, 24, 25, 26, 26, 27, 27, 28, 29, 29, 30, 30, 30,
    31, 32, 32, 33, 33, 33, 34, 34, 35, 35, 35, 36, 36, 36, 37, 37, 37, 38, 38, 63};

}  // namespace mcoder

struct ContextModel {
    uint8_t state = 0;  // 0..62
    uint8_t mps = 0;

    // Standard linear-model init: an 8-bit init value encodes slope/offset.
    void init(int qp, uint8_t init_value) {
        int slope = (init_value >> 4) * 5 - 45;
        int offset = ((init_value & 15) << 3) - 16;
        int pre = clip3(1, 126, ((slope * clip3(0, 51, qp)) >> 4) + offset);
        if (pre <= 63) {
            state = (uint8_t)(63 - pre);
            mps = 0;
        } else {
            state = (uint8_t)(pre - 64);
            mps = 1;
        }
    }
};

struct Payload {
    std::vector<uint8_t> bytes;
    uint64_t bit_count = 0;  // coded bits before flush padding
};

class ArithEncoder {
public:
    ArithEncoder() { bytes_.reserve(256); }

    void encode_bit(ContextModel& model, int bin) {
        uint32_t lps = mcoder::LPS_table[model.state][(range_ >> 6) - 4];
        range_ -= lps;
        if ((uint8_t)bin != model.mps) {
            int num_bits = mcoder::renorm_table[lps >> 3];
            low_ = (low_ + range_) << num_bits;
            range_ = lps << num_bits;
            if (model.state == 0) model.mps = 1 - model.mps;
            model.state = mcoder::next_state_LPS[model.state];
            bits_left_ -= num_bits;
            bit_count_ += num_bits;
        } else {
            model.state = mcoder::next_state_MPS[model.state];
            if (range_ >= 256) return;
            low_ <<= 1;
            range_ <<= 1;
            bits_left_--;
            bit_count_++;
        }
        if (bits_left_ < 12) write_out();
    }

    void encode_bypass(int bin) {
        low_ <<= 1;
        if (bin) low_ += range_;
        bits_left_--;
        bit_count_++;
        if (bits_left_ < 12) write_out();
    }

    void encode_bypass_bits(uint32_t v, int n) {
        for (int i = n - 1; i >= 0; i--) encode_bypass((v >> i) & 1);
    }

    uint64_t bit_count() const { return bit_count_; }

    // Flushes the remaining low bits, byte-aligned. The encoder is spent.
    Payload finish() {
        if (low_ >> (32 - bits_left_)) {
            append_byte(buffered_byte_ + 1);
            while (num_buffered_ > 1) {
                append_byte(0x00);
                num_buffered_--;
            }
            low_ -= 1u << (32 - bits_left_);
        } else {
            if (num_buffered_ > 0) append_byte(buffered_byte_);
            while (num_buffered_ > 1) {
                append_byte(0xff);
                num_buffered_--;
            }
        }
        int n = 32 - bits_left_;
        uint32_t val = low_;
        while (n % 8) {
            val <<= 1;
            n++;
        }
        while (n > 0) {
            append_byte((val >> (n - 8)) & 0xff);
            n -= 8;
        }
        Payload p;
        p.bytes = std::move(bytes_);
        p.bit_count = bit_count_;
        return p;
    }

private:
    void append_byte(int b) { bytes_.push_back((uint8_t)(b & 0xff)); }

    void write_out() {
        int lead_byte = (int)(low_ >> (24 - bits_left_));
        bits_left_ += 8;
        low_ &= 0xffffffffu >> bits_left_;
        if (lead_byte == 0xff) {
            num_buffered_++;
        } else if (num_buffered_ > 0) {
            int carry = lead_byte >> 8;
            append_byte(buffered_byte_ + carry);
            buffered_byte_ = lead_byte & 0xff;
            int fill = (0xff + carry) & 0xff;
            while (num_buffered_ > 1) {
                append_byte(fill);
                num_buffered_--;
            }
        } else {
            num_buffered_ = 1;
            buffered_byte_ = lead_byte & 0xff;
        }
    }

    uint32_t low_ = 0;
    uint32_t range_ = 510;
    int bits_left_ = 23;
    int buffered_byte_ = 0xff;
    int num_buffered_ = 0;
    uint64_t bit_count_ = 0;
    std::vector<uint8_t> bytes_;
};

class ArithDecoder {
public:
    ArithDecoder(const uint8_t* data, size_t size) : data_(data), size_(size) {
        if (size_ > 0) {
            value_ = (uint32_t)next_byte() << 8;
            bits_needed_ -= 8;
        }
        if (size_ > 1) {
            value_ |= next_byte();
            bits_needed_ -= 8;
        }
    }

    explicit ArithDecoder(const Payload& p) : ArithDecoder(p.bytes.data(), p.bytes.size()) {}

    int decode_bit(ContextModel& model) {
        uint32_t lps = mcoder::LPS_table[model.state][(range_ >> 6) - 4];
        range_ -= lps;
        uint32_t scaled_range = range_ << 7;
        int bit;
        if (value_ < scaled_range) {
            bit = model.mps;
            model.state = mcoder::next_state_MPS[model.state];
            if (scaled_range < (256u << 7)) {
                range_ = scaled_range >> 6;
                value_ <<= 1;
                if (++bits_needed_ == 0) {
                    bits_needed_ = -8;
                    value_ |= next_byte();
                }
            }
        } else {
            value_ -= scaled_range;
            int num_bits = mcoder::renorm_table[lps >> 3];
            value_ <<= num_bits;
            range_ = lps << num_bits;
            bit = 1 - model.mps;
            if (model.state == 0) model.mps = 1 - model.mps;
            model.state = mcoder::next_state_LPS[model.state];
            bits_needed_ += num_bits;
            if (bits_needed_ >= 0) {
                value_ |= (uint32_t)next_byte() << bits_needed_;
                bits_needed_ -= 8;
            }
        }
        return bit;
    }

    int decode_bypass() {
        value_ <<= 1;
        if (++bits_needed_ >= 0) {
            bits_needed_ = -8;
            value_ |= next_byte();
        }
        uint32_t scaled_range = range_ << 7;
        if (value_ >= scaled_range) {
            value_ -= scaled_range;
            return 1;
        }
        return 0;
    }

    uint32_t decode_bypass_bits(int n) {
        uint32_t v = 0;
        for (int i = 0; i < n; i++) v = (v << 1) | decode_bypass();
        return v;
    }

    // Bytes consumed beyond the payload (the coder legitimately prefetches a
    // little; anything past a small slack means a corrupt stream).
    size_t overrun() const { return overrun_; }

private:
    uint8_t next_byte() {
        if (pos_ < size_) return data_[pos_++];
        if (++overrun_ > 4) throw CorruptStreamError("arithmetic payload exhausted mid-symbol");
        return 0;
    }

    const uint8_t* data_;
    size_t size_;
    size_t pos_ = 0;
    size_t overrun_ = 0;
    uint32_t value_ = 0;
    uint32_t range_ = 510;
    int bits_needed_ = 8;
};

// Standalone bin-sequence coding (tests and diagnostics). Each entry pairs a
// bin value with a context slot; slot < 0 means bypass.
struct BinSpec {
    uint8_t value = 0;
    int ctx = -1;
};

inline Payload encode_bins(const std::vector<BinSpec>& bins, std::vector<ContextModel> ctx) {
    ArithEncoder enc;
    for (const BinSpec& b : bins) {
        if (b.ctx < 0)
            enc.encode_bypass(b.value);
        else
            enc.encode_bit(ctx[(size_t)b.ctx], b.value);
    }
    return enc.finish();
}

// layout gives the mode/context of every bin to read, in order.
inline std::vector<uint8_t> decode_bins(const Payload& p, const std::vector<BinSpec>& layout,
                                        std::vector<ContextModel> ctx) {
    ArithDecoder dec(p);
    std::vector<uint8_t> out;
    out.reserve(layout.size());
    for (const BinSpec& b : layout) {
        if (b.ctx < 0)
            out.push_back((uint8_t)dec.decode_bypass());
        else
            out.push_back((uint8_t)dec.decode_bit(ctx[(size_t)b.ctx]));
    }
    return out;
}

}  // namespace rsel
