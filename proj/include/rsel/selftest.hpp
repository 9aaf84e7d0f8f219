#pragma once

// Exhaustive inversion battery for every reversible primitive: binarizations,
// element transforms, flag embedding and the chaotic permutation. Used by the
// CLI selftest subcommand and runnable from test code; each case is a named
// pass/fail row so a regression points straight at the broken primitive.

#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "rsel/binarization.hpp"
#include "rsel/cipher.hpp"
#include "rsel/common.hpp"
#include "rsel/edge.hpp"
#include "rsel/keystream.hpp"

namespace rsel {

struct SelfTestCase {
    std::string name;
    bool pass = true;
    std::string detail;  // first failing input, empty when pass
};

namespace selftest_detail {

struct Battery {
    std::vector<SelfTestCase> cases;
    SelfTestCase* cur = nullptr;

    void begin(const std::string& name) {
        cases.push_back({name, true, ""});
        cur = &cases.back();
    }

    void check(bool ok, const std::string& detail) {
        if (!ok && cur->pass) {
            cur->pass = false;
            cur->detail = detail;
        }
    }
};

inline StreamKey key_from_rng(std::mt19937_64& rng) {
    StreamKey k;
    for (auto& b : k.bytes) b = (uint8_t)rng();
    return k;
}

}  // namespace selftest_detail

inline std::vector<SelfTestCase> run_selftest() {
    using selftest_detail::Battery;
    Battery bt;
    std::mt19937_64 rng(0x5e1f7e57u);

    bt.begin("eg_roundtrip");
    for (int k = 0; k <= 3; k++)
        for (uint32_t v = 0; v <= 65536; v++) {
            BinString b = eg_encode(v, k);
            BinStringReader rd(b);
            uint32_t got = eg_decode(rd, k);
            bt.check(got == v && rd.exhausted(),
                     "k=" + std::to_string(k) + " v=" + std::to_string(v));
        }

    bt.begin("tr_roundtrip");
    for (int k = 0; k <= 3; k++)
        for (uint32_t cmax : {1u, 2u, 3u, 4u, 5u, 8u, 16u, 31u, 32u, 100u, 256u})
            for (uint32_t v = 0; v <= cmax; v++) {
                uint32_t cap = cmax >> k;
                if ((v >> k) >= cap && v != (cap << k)) continue;  // escape-code domain
                BinString b = tr_encode(v, k, cmax);
                BinStringReader rd(b);
                uint32_t got = tr_decode(rd, k, cmax);
                bt.check(got == v && rd.exhausted(), "k=" + std::to_string(k) +
                                                         " cmax=" + std::to_string(cmax) +
                                                         " v=" + std::to_string(v));
            }

    bt.begin("fl_roundtrip");
    for (int n = 0; n <= 16; n++) {
        uint32_t lim = n <= 12 ? (1u << n) : 4096;
        for (uint32_t i = 0; i < lim; i++) {
            uint32_t v = n <= 12 ? i : (uint32_t)rng() & ((1u << n) - 1);
            BinString b = fl_encode(v, n);
            BinStringReader rd(b);
            uint32_t got = fl_decode(rd, n);
            bt.check(got == v && rd.exhausted(),
                     "n=" + std::to_string(n) + " v=" + std::to_string(v));
        }
    }

    bt.begin("sign_bit_involution");
    for (uint32_t bit = 0; bit <= 1; bit++)
        for (uint32_t s = 0; s <= 3; s++)
            bt.check(enc_sign_bit(enc_sign_bit(bit, s), s) == bit,
                     "bit=" + std::to_string(bit) + " s=" + std::to_string(s));

    bt.begin("mvd_suffix_involution");
    for (uint32_t v = 0; v <= 4096; v++)
        for (int t = 0; t < 8; t++) {
            uint64_t s = rng();
            uint32_t e = enc_mvd_suffix(v, s);
            bt.check(enc_mvd_suffix(e, s) == v &&
                         eg_suffix_len(e, kMvdEgOrder) == eg_suffix_len(v, kMvdEgOrder),
                     "v=" + std::to_string(v));
        }

    bt.begin("coef_suffix_involution");
    for (int k = 0; k <= 4; k++)
        for (uint32_t v = 0; v <= 4096; v++) {
            uint64_t s = rng();
            uint32_t e = enc_coef_suffix(v, k, s);
            bt.check(enc_coef_suffix(e, k, s) == v && (e >> k) == (v >> k),
                     "k=" + std::to_string(k) + " v=" + std::to_string(v));
        }

    bt.begin("merge_idx_inverse");
    for (uint32_t v = 0; v < kMergeAlphabet; v++)
        for (uint32_t s = 0; s < 2 * kMergeAlphabet; s++)
            bt.check(dec_merge_idx(enc_merge_idx(v, s), s) == v &&
                         enc_merge_idx(v, s) < kMergeAlphabet,
                     "v=" + std::to_string(v) + " s=" + std::to_string(s));

    bt.begin("mpm_idx_inverse");
    for (uint32_t v = 0; v < kMpmAlphabet; v++)
        for (uint32_t s = 0; s < 2 * kMpmAlphabet; s++)
            bt.check(dec_mpm_idx(enc_mpm_idx(v, s), s) == v && enc_mpm_idx(v, s) < kMpmAlphabet,
                     "v=" + std::to_string(v) + " s=" + std::to_string(s));

    bt.begin("chroma_ipm_inverse");
    for (uint32_t v = 0; v < kChromaAlphabet; v++)
        for (uint32_t s = 0; s < 2 * kChromaAlphabet; s++)
            bt.check(dec_chroma_ipm(enc_chroma_ipm(v, s), s) == v &&
                         enc_chroma_ipm(v, s) < kChromaAlphabet,
                     "v=" + std::to_string(v) + " s=" + std::to_string(s));

    bt.begin("ipm_rem_involution");
    for (uint32_t v = 0; v < 32; v++)
        for (uint32_t s = 0; s < 64; s++)
            bt.check(enc_luma_ipm_rem(enc_luma_ipm_rem(v, s), s) == v &&
                         enc_luma_ipm_rem(v, s) < 32,
                     "v=" + std::to_string(v) + " s=" + std::to_string(s));

    bt.begin("mvp_idx_involution");
    for (uint32_t v = 0; v < 2; v++)
        for (uint32_t s = 0; s < 4; s++)
            bt.check(enc_mvp_idx(enc_mvp_idx(v, s), s) == v && enc_mvp_idx(v, s) < 2,
                     "v=" + std::to_string(v) + " s=" + std::to_string(s));

    bt.begin("ref_idx_inverse");
    for (int rn = 1; rn <= 4; rn++)
        for (uint32_t v = 0; v < (uint32_t)rn; v++)
            for (uint32_t s = 0; s < 8; s++)
                bt.check(dec_ref_idx(enc_ref_idx(v, rn, s), rn, s) == v &&
                             enc_ref_idx(v, rn, s) < (uint32_t)rn,
                         "rn=" + std::to_string(rn) + " v=" + std::to_string(v) +
                             " s=" + std::to_string(s));

    bt.begin("dqp_value_inverse");
    for (int m = 1; m <= 15; m++)
        for (int v = -m; v <= m; v++)
            for (uint32_t s = 0; s < (uint32_t)(2 * m + 1) + 3; s++) {
                int e = enc_dqp_value(v, m, s);
                bt.check(dec_dqp_value(e, m, s) == v && e >= -m && e <= m,
                         "m=" + std::to_string(m) + " v=" + std::to_string(v) +
                             " s=" + std::to_string(s));
            }

    bt.begin("dqp_sign_involution");
    for (uint32_t v = 0; v < 2; v++)
        for (uint32_t s = 0; s < 4; s++)
            bt.check(enc_dqp_sign(enc_dqp_sign(v, s), s) == v,
                     "v=" + std::to_string(v) + " s=" + std::to_string(s));

    bt.begin("embed_extract_flag");
    for (int32_t v = -32768; v <= 32768; v++) {
        if (v == 0) continue;
        for (int w = 0; w <= 1; w++) {
            ExtractedFlag f = extract_flag(embed_flag(v, w));
            bt.check(f.level == v && f.w == w, "v=" + std::to_string(v) +
                                                   " w=" + std::to_string(w));
        }
    }

    bt.begin("permutation_inverse_small");
    for (int n = 0; n <= 8; n++)
        for (int t = 0; t < 64; t++) {
            StreamKey key = selftest_detail::key_from_rng(rng);
            ChaoticParams p =
                derive_chaotic_params(key, rng(), (uint32_t)rng(), (uint32_t)rng());
            std::vector<int> perm = chaotic_permutation(p, n);
            std::vector<uint8_t> seen((size_t)n, 0);
            bool bij = (int)perm.size() == n;
            for (int v : perm)
                if (v < 0 || v >= n || seen[(size_t)v]++)
                    bij = false;
            std::vector<int32_t> vals((size_t)n);
            for (int i = 0; i < n; i++) vals[(size_t)i] = i + 1;
            bt.check(bij && unscramble_values(scramble_values(vals, perm), perm) == vals,
                     "n=" + std::to_string(n) + " trial=" + std::to_string(t));
        }

    bt.begin("permutation_inverse_large");
    {
        StreamKey key = selftest_detail::key_from_rng(rng);
        for (int t = 0; t < 10000; t++) {
            int n = 9 + (int)(rng() % 56);
            ChaoticParams p =
                derive_chaotic_params(key, rng(), (uint32_t)rng(), (uint32_t)rng());
            std::vector<int> perm = chaotic_permutation(p, n);
            std::vector<int32_t> vals((size_t)n);
            for (int i = 0; i < n; i++) vals[(size_t)i] = (int32_t)(rng() & 0xffff) - 0x8000;
            bt.check(unscramble_values(scramble_values(vals, perm), perm) == vals,
                     "trial=" + std::to_string(t) + " n=" + std::to_string(n));
        }
    }

    bt.begin("block_scramble_roundtrip");
    {
        StreamKey key = selftest_detail::key_from_rng(rng);
        for (int t = 0; t < 2000; t++) {
            int n = (t & 1) ? 16 : 64;
            std::vector<int32_t> coef((size_t)n, 0);
            int nz = (int)(rng() % (uint64_t)(n + 1));
            for (int i = 0; i < nz; i++) {
                int32_t v;
                do
                    v = (int32_t)(rng() & 0x3ff) - 0x200;
                while (v == 0);
                coef[rng() % (uint64_t)n] = v;
            }
            bool edge = rng() & 1;
            ChaoticParams p =
                derive_chaotic_params(key, rng(), (uint32_t)rng(), (uint32_t)rng());
            std::vector<int32_t> s = coef;
            scramble_tu(s, p, edge);
            unscramble_tu(s, p);
            bt.check(s == coef, "trial=" + std::to_string(t));
        }
    }

    return bt.cases;
}

inline bool selftest_all_passed(const std::vector<SelfTestCase>& cases) {
    for (const SelfTestCase& c : cases)
        if (!c.pass) return false;
    return true;
}

}  // namespace rsel
