#pragma once

// Three-level selective encryption of syntax-element values. Every transform
// is alphabet-closed and exactly invertible, and the basic tier touches only
// bypass-coded bits so it cannot change payload sizes.
//
//   basic    : MVD signs + EG_1 suffixes, coefficient signs + rice suffixes,
//              DQP sign (when nonzero), merge index (mod 5), reference index
//              suffix (per active window size)
//   enhanced : basic + MPM index (mod 3), 5-bit non-MPM luma mode, chroma
//              mode (mod 5), MVP index, DQP value (modular shift in index
//              space i = dqp + max_dqp over 2*max_dqp+1 symbols)
//   advanced : enhanced (plus coefficient scrambling, driven elsewhere)

#include <optional>
#include <vector>

#include "rsel/binarization.hpp"
#include "rsel/common.hpp"
#include "rsel/keystream.hpp"

namespace rsel {

enum class Level : uint8_t { None = 0, Basic = 1, Enhanced = 2, Advanced = 3 };

inline const char* level_name(Level l) {
    switch (l) {
        case Level::None: return "none";
        case Level::Basic: return "basic";
        case Level::Enhanced: return "enhanced";
        case Level::Advanced: return "advanced";
    }
    return "?";
}

enum class ElemKind : uint8_t {
    LumaIpmMpmFlag,
    LumaIpmMpmIdx,
    LumaIpmRem,
    ChromaIpm,
    MergeFlag,
    MergeIdx,
    MvdSignH,
    MvdSignV,
    MvdValH,
    MvdValV,
    MvpIdx,
    RefFrmIdx,
    CoefSigFlag,
    CoefGt1,
    CoefGt2,
    CoefSign,
    CoefRemaining,
    DqpSign,
    DqpValue,
    LastPos
};

inline const char* kind_name(ElemKind k) {
    static const char* names[] = {
        "LumaIPM_MPMFlag", "LumaIPM_MPMIdx", "LumaIPM_Rem", "ChromaIPM", "MergeFlag",
        "MergeIdx",        "MVDSign_H",      "MVDSign_V",   "MVDVal_H",  "MVDVal_V",
        "MVPIdx",          "RefFrmIdx",      "CoefSigFlag", "CoefGt1",   "CoefGt2",
        "CoefSign",        "CoefRemaining",  "DQPSign",     "DQPValue",  "LastPos"};
    return names[(int)k];
}

constexpr uint32_t kMergeAlphabet = 5;   // merge candidate list length
constexpr uint32_t kMpmAlphabet = 3;     // MPM list length
constexpr uint32_t kChromaAlphabet = 5;  // chroma mode list length
constexpr int kCoefRemainingCap = 4;     // TR prefix cap before the escape code
constexpr int kMvdEgOrder = 1;           // EG order of the MVD magnitude code

// ---- pure element transforms (s is the keystream draw) ----

inline uint32_t enc_sign_bit(uint32_t bit, uint32_t s) {
    return (bit ^ s) & 1;  // involution
}

// XOR on the info bits of an EG_k code; the prefix class is untouched, so
// code length is preserved and the magnitude moves inside its class.
inline uint32_t enc_eg_suffix(uint32_t v, int k, uint64_t s) {
    int slen;
    uint32_t suffix;
    eg_split(v, k, &slen, &suffix);
    if (slen == 0) return v;
    uint32_t mask = slen >= 32 ? 0xffffffffu : ((1u << slen) - 1);
    return eg_join(v, k, (suffix ^ (uint32_t)s) & mask);
}

inline uint32_t enc_mvd_suffix(uint32_t v, uint64_t s) {
    return enc_eg_suffix(v, kMvdEgOrder, s);
}

// XOR on the k-bit rice suffix of a non-escaped TR code. Escaped values
// (prefix at cap) pass through untouched.
inline uint32_t enc_coef_suffix(uint32_t v, int k, uint64_t s) {
    if (k <= 0) return v;
    uint32_t q = v >> k;
    if (q >= (uint32_t)kCoefRemainingCap) return v;
    uint32_t mask = (1u << k) - 1;
    return (q << k) | ((v ^ (uint32_t)s) & mask);
}

inline uint32_t enc_merge_idx(uint32_t idx, uint32_t s) {
    return (idx + s) % kMergeAlphabet;
}

inline uint32_t dec_merge_idx(uint32_t idx, uint32_t s) {
    return (idx + kMergeAlphabet - s % kMergeAlphabet) % kMergeAlphabet;
}

inline uint32_t enc_mpm_idx(uint32_t idx, uint32_t s) {
    return (idx + s) % kMpmAlphabet;
}

inline uint32_t dec_mpm_idx(uint32_t idx, uint32_t s) {
    return (idx + kMpmAlphabet - s % kMpmAlphabet) % kMpmAlphabet;
}

inline uint32_t enc_chroma_ipm(uint32_t idx, uint32_t s) {
    return (idx + s) % kChromaAlphabet;
}

inline uint32_t dec_chroma_ipm(uint32_t idx, uint32_t s) {
    return (idx + kChromaAlphabet - s % kChromaAlphabet) % kChromaAlphabet;
}

inline uint32_t enc_luma_ipm_rem(uint32_t rem, uint32_t s) {
    return (rem ^ s) & 31;  // involution on the 32-mode non-MPM alphabet
}

inline uint32_t enc_mvp_idx(uint32_t idx, uint32_t s) {
    return (idx ^ s) & 1;  // involution
}

// rn = active reference window size (1..4). rn=1 carries no coded index.
inline uint32_t enc_ref_idx(uint32_t v, int rn, uint32_t s) {
    switch (rn) {
        case 1: return v;
        case 2: return (v ^ s) & 1;
        case 3: return (v + s) % 3;
        case 4: return (v ^ s) & 3;
    }
    throw RangeError("enc_ref_idx: rn = " + std::to_string(rn));
}

inline uint32_t dec_ref_idx(uint32_t v, int rn, uint32_t s) {
    switch (rn) {
        case 1: return v;
        case 2: return (v ^ s) & 1;
        case 3: return (v + 3 - s % 3) % 3;
        case 4: return (v ^ s) & 3;
    }
    throw RangeError("dec_ref_idx: rn = " + std::to_string(rn));
}

inline uint32_t enc_dqp_sign(uint32_t sign, uint32_t s) {
    return (sign ^ s) & 1;  // involution; caller applies only when dqp != 0
}

// Modular shift in index space; closed over [-max_dqp, max_dqp].
inline int enc_dqp_value(int dqp, int max_dqp, uint32_t s) {
    int m = 2 * max_dqp + 1;
    int i = dqp + max_dqp;
    return ((i + (int)(s % (uint32_t)m)) % m) - max_dqp;
}

inline int dec_dqp_value(int dqp, int max_dqp, uint32_t s) {
    int m = 2 * max_dqp + 1;
    int i = dqp + max_dqp;
    return ((i + m - (int)(s % (uint32_t)m)) % m) - max_dqp;
}

// ---- level dispatch ----

inline bool level_covers(Level level, ElemKind kind) {
    switch (kind) {
        case ElemKind::MvdSignH:
        case ElemKind::MvdSignV:
        case ElemKind::MvdValH:
        case ElemKind::MvdValV:
        case ElemKind::CoefSign:
        case ElemKind::CoefRemaining:
        case ElemKind::DqpSign:
        case ElemKind::MergeIdx:
        case ElemKind::RefFrmIdx:
            return level >= Level::Basic;
        case ElemKind::LumaIpmMpmIdx:
        case ElemKind::LumaIpmRem:
        case ElemKind::ChromaIpm:
        case ElemKind::MvpIdx:
        case ElemKind::DqpValue:
            return level >= Level::Enhanced;
        default:
            return false;
    }
}

enum class CipherDir { Encrypt, Decrypt };

// Side-channel facts the dispatch needs; filled by the codec per element.
struct CipherCtx {
    int rn = 1;            // RefFrmIdx window size
    int rice_k = 0;        // CoefRemaining rice parameter
    int max_dqp = 12;      // DQPValue index-space size
    bool dqp_nonzero = false;  // DQPSign applies only when the (post-value) dqp != 0
};

struct DrawRecord {
    ElemKind kind;
    int width;  // bits drawn, or -1 for a rejection-sampled uniform
};

// One session = one keystream walk over the element sequence. Encoder and
// decoder must call apply() for the same elements in the same order.
class ElementCipher {
public:
    ElementCipher(const StreamKey& key, uint64_t nonce, Level level, CipherDir dir)
        : ks_(key, nonce), level_(level), dir_(dir) {}

    Level level() const { return level_; }

    void set_trace(std::vector<DrawRecord>* t) { trace_ = t; }

    // Returns the transformed value; uncovered kinds pass through drawless.
    int32_t apply(ElemKind kind, int32_t value, const CipherCtx& ctx = {}) {
        if (!level_covers(level_, kind)) return value;
        bool enc = dir_ == CipherDir::Encrypt;
        switch (kind) {
            case ElemKind::MvdSignH:
            case ElemKind::MvdSignV:
            case ElemKind::CoefSign:
                return (int32_t)enc_sign_bit((uint32_t)value, draw_bits(kind, 1));
            case ElemKind::MvpIdx:
                return (int32_t)enc_mvp_idx((uint32_t)value, draw_bits(kind, 1));
            case ElemKind::DqpSign:
                if (!ctx.dqp_nonzero) return value;
                return (int32_t)enc_dqp_sign((uint32_t)value, draw_bits(kind, 1));
            case ElemKind::MvdValH:
            case ElemKind::MvdValV: {
                int slen = eg_suffix_len((uint32_t)value, kMvdEgOrder);
                if (slen == 0) return value;
                return (int32_t)enc_mvd_suffix((uint32_t)value, draw_bits(kind, slen));
            }
            case ElemKind::CoefRemaining: {
                int k = ctx.rice_k;
                if (k <= 0 || ((uint32_t)value >> k) >= (uint32_t)kCoefRemainingCap) return value;
                return (int32_t)enc_coef_suffix((uint32_t)value, k, draw_bits(kind, k));
            }
            case ElemKind::MergeIdx: {
                uint32_t s = draw_uniform(kind, kMergeAlphabet);
                return (int32_t)(enc ? enc_merge_idx((uint32_t)value, s)
                                     : dec_merge_idx((uint32_t)value, s));
            }
            case ElemKind::RefFrmIdx: {
                if (ctx.rn <= 1) return value;
                uint32_t s = ctx.rn == 3 ? draw_uniform(kind, 3)
                                         : (uint32_t)draw_bits(kind, ctx.rn == 2 ? 1 : 2);
                return (int32_t)(enc ? enc_ref_idx((uint32_t)value, ctx.rn, s)
                                     : dec_ref_idx((uint32_t)value, ctx.rn, s));
            }
            case ElemKind::LumaIpmMpmIdx: {
                uint32_t s = draw_uniform(kind, kMpmAlphabet);
                return (int32_t)(enc ? enc_mpm_idx((uint32_t)value, s)
                                     : dec_mpm_idx((uint32_t)value, s));
            }
            case ElemKind::LumaIpmRem:
                return (int32_t)enc_luma_ipm_rem((uint32_t)value, (uint32_t)draw_bits(kind, 5));
            case ElemKind::ChromaIpm: {
                uint32_t s = draw_uniform(kind, kChromaAlphabet);
                return (int32_t)(enc ? enc_chroma_ipm((uint32_t)value, s)
                                     : dec_chroma_ipm((uint32_t)value, s));
            }
            case ElemKind::DqpValue: {
                uint32_t s = draw_uniform(kind, (uint32_t)(2 * ctx.max_dqp + 1));
                return enc ? enc_dqp_value(value, ctx.max_dqp, s)
                           : dec_dqp_value(value, ctx.max_dqp, s);
            }
            default:
                return value;
        }
    }

    // Draws (and traces) the sample for an element without applying the
    // transform. The delta-QP pair needs this: samples must be taken in
    // emission order (value, then sign) while the decoder applies the
    // transforms in reverse. Returns nothing when the level/gating rules
    // would not consume a sample.
    std::optional<uint64_t> draw_for(ElemKind kind, const CipherCtx& ctx = {}) {
        if (!level_covers(level_, kind)) return std::nullopt;
        switch (kind) {
            case ElemKind::DqpValue:
                return draw_uniform(kind, (uint32_t)(2 * ctx.max_dqp + 1));
            case ElemKind::DqpSign:
                if (!ctx.dqp_nonzero) return std::nullopt;
                return draw_bits(kind, 1);
            default:
                throw RangeError("draw_for supports only the delta-QP pair");
        }
    }

private:
    uint64_t draw_bits(ElemKind kind, int n) {
        if (trace_) trace_->push_back({kind, n});
        return ks_.next_bits64(n);
    }

    uint32_t draw_uniform(ElemKind kind, uint32_t m) {
        if (trace_) trace_->push_back({kind, -1});
        return ks_.next_uniform(m);
    }

    Keystream ks_;
    Level level_;
    CipherDir dir_;
    std::vector<DrawRecord>* trace_ = nullptr;
};

}  // namespace rsel
