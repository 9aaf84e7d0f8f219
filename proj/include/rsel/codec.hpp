#pragma once

// Tile-independent mini codec. 16x16 units, intra (planar/DC/33 angular) and
// single-list inter with full-search integer motion, 4x4/8x8 DCT transforms,
// and the context-adaptive arithmetic coder from entropy.hpp. Every tile gets
// its own arithmetic chunk with fresh contexts so tiles parse independently.
//
// The encryptor sits between value selection and binarization: elements of
// units inside protected (ROI) tiles pass through ElementCipher on their way
// to the bin writer, and at the highest level the quantized luma coefficients
// of those units additionally run through the chaotic scrambler. The encoder
// itself is closed-loop on the plain values, so the reconstruction the keyed
// decoder produces is bit-identical to an unencrypted run.

#include <algorithm>
#include <array>
#include <climits>
#include <cmath>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "rsel/binarization.hpp"
#include "rsel/cipher.hpp"
#include "rsel/common.hpp"
#include "rsel/container.hpp"
#include "rsel/edge.hpp"
#include "rsel/entropy.hpp"
#include "rsel/keystream.hpp"
#include "rsel/roi.hpp"
#include "rsel/yuv.hpp"

namespace rsel {

struct MotionVector {
    int x = 0;
    int y = 0;

    bool operator==(const MotionVector&) const = default;
};

struct CodecConfig {
    int qp = 24;
    int cu_size = 16;
    int tu_size = 8;  // 4 or 8
    int tile_w = 32;
    int tile_h = 32;
    std::string gop = "IBBB";
    int search_range = 8;
    int max_ref_frames = 2;
    int max_dqp = 12;
    CannyParams canny;

    void validate() const {
        if (qp < 0 || qp > 51) throw RangeError("qp must be in 0..51");
        if (cu_size != 16) throw RangeError("cu_size must be 16");
        if (tu_size != 4 && tu_size != 8) throw RangeError("tu_size must be 4 or 8");
        if (tile_w <= 0 || tile_h <= 0 || tile_w % cu_size != 0 || tile_h % cu_size != 0)
            throw RangeError("tile dimensions must be positive multiples of cu_size");
        if (gop.empty() || gop.size() > 8 || gop[0] != 'I')
            throw RangeError("gop must be 1..8 characters and start with I");
        for (char c : gop)
            if (c != 'I' && c != 'P' && c != 'B')
                throw RangeError("gop may contain only I, P and B");
        if (search_range < 1 || search_range > 32) throw RangeError("search_range must be 1..32");
        if (max_ref_frames < 1 || max_ref_frames > 4)
            throw RangeError("max_ref_frames must be 1..4");
        if (max_dqp < 1 || max_dqp > 15) throw RangeError("max_dqp must be 1..15");
    }
};

namespace codec_detail {

// ---- intra prediction ------------------------------------------------------

constexpr int kAngle[35] = {0,   0,   32,  26,  21,  17,  13,  9,   5,   2,   0,  -2,
                            -5,  -9,  -13, -17, -21, -26, -32, -26, -21, -17, -13, -9,
                            -5,  -2,  0,   2,   5,   9,   13,  17,  21,  26,  32};

inline int inv_angle(int angle) {
    switch (angle) {
        case -2: return -4096;
        case -5: return -1638;
        case -9: return -910;
        case -13: return -630;
        case -17: return -482;
        case -21: return -390;
        case -26: return -315;
        case -32: return -256;
        default: return 0;
    }
}

// Neighbor samples around an n x n block, after availability substitution.
// left[j] = p(-1,j) and top[i] = p(i,-1) for 0 <= i,j < 2n, plus the corner.
struct IntraNeighbors {
    std::vector<uint8_t> left, top;
    uint8_t corner = 128;
};

// Availability is purely geometric given the raster coding order: the left
// column and top row exist inside the current tile, top-right only up to the
// tile edge, below-left never.
inline IntraNeighbors gather_neighbors(const uint8_t* plane, int W, const PixelRegion& tile,
                                       int bx, int by, int n) {
    int N = 4 * n + 1;  // left bottom-up, corner, top left-to-right
    std::vector<uint8_t> lin((size_t)N, 0), ok((size_t)N, 0);
    bool left_ok = bx > tile.x1;
    bool top_ok = by > tile.y1;
    for (int i = 0; i < 2 * n; i++) {
        int yy = by + 2 * n - 1 - i;
        if (left_ok && yy < by + n) {
            lin[i] = plane[(size_t)yy * W + (bx - 1)];
            ok[i] = 1;
        }
    }
    if (left_ok && top_ok) {
        lin[2 * n] = plane[(size_t)(by - 1) * W + (bx - 1)];
        ok[2 * n] = 1;
    }
    for (int i = 0; i < 2 * n; i++) {
        int xx = bx + i;
        if (top_ok && xx < tile.x2) {
            lin[2 * n + 1 + i] = plane[(size_t)(by - 1) * W + xx];
            ok[2 * n + 1 + i] = 1;
        }
    }

    bool any = false;
    for (int i = 0; i < N; i++)
        if (ok[i]) any = true;
    if (!any) {
        std::fill(lin.begin(), lin.end(), (uint8_t)128);
    } else {
        if (!ok[0]) {
            int j = 1;
            while (!ok[j]) j++;
            lin[0] = lin[j];
        }
        for (int i = 1; i < N; i++)
            if (!ok[i]) lin[i] = lin[i - 1];
    }

    IntraNeighbors nb;
    nb.left.resize((size_t)2 * n);
    nb.top.resize((size_t)2 * n);
    for (int j = 0; j < 2 * n; j++) nb.left[j] = lin[2 * n - 1 - j];
    nb.corner = lin[2 * n];
    for (int i = 0; i < 2 * n; i++) nb.top[i] = lin[2 * n + 1 + i];
    return nb;
}

inline void predict_intra(int mode, const IntraNeighbors& nb, int n, uint8_t* dst) {
    const std::vector<uint8_t>& L = nb.left;
    const std::vector<uint8_t>& T = nb.top;
    int lg = bits_for((uint32_t)n);
    if (mode == 0) {  // planar
        for (int y = 0; y < n; y++)
            for (int x = 0; x < n; x++) {
                int v = (n - 1 - x) * L[y] + (x + 1) * T[n] + (n - 1 - y) * T[x] +
                        (y + 1) * L[n] + n;
                dst[y * n + x] = (uint8_t)(v >> (lg + 1));
            }
        return;
    }
    if (mode == 1) {  // DC over the immediate left column and top row
        int s = n;
        for (int i = 0; i < n; i++) s += L[i] + T[i];
        uint8_t dc = (uint8_t)(s >> (lg + 1));
        std::memset(dst, dc, (size_t)n * n);
        return;
    }

    int angle = kAngle[mode];
    bool vertical = mode >= 18;
    const std::vector<uint8_t>& main = vertical ? T : L;
    const std::vector<uint8_t>& side = vertical ? L : T;

    std::vector<uint8_t> refbuf((size_t)3 * n + 2);
    uint8_t* ref = refbuf.data() + n;
    ref[0] = nb.corner;
    for (int i = 1; i <= 2 * n; i++) ref[i] = main[i - 1];
    ref[2 * n + 1] = main[2 * n - 1];
    int bound = (n * angle) >> 5;
    if (angle < 0 && bound < -1) {
        int ia = inv_angle(angle);
        for (int x = -1; x >= bound; x--) {
            int j = -1 + ((x * ia + 128) >> 8);
            ref[x] = j < 0 ? nb.corner : side[j];
        }
    }

    for (int y = 0; y < n; y++)
        for (int x = 0; x < n; x++) {
            int t = vertical ? y : x;  // distance from the main edge
            int u = vertical ? x : y;  // position along the main edge
            int ii = ((t + 1) * angle) >> 5;
            int ff = ((t + 1) * angle) & 31;
            dst[y * n + x] =
                (uint8_t)(((32 - ff) * ref[u + ii + 1] + ff * ref[u + ii + 2] + 16) >> 5);
        }
}

// Most-probable-mode list from the left/above luma modes (-1 = unavailable,
// treated as planar).
inline std::array<int, 3> build_mpm_list(int left_mode, int above_mode) {
    int l = left_mode < 0 ? 0 : left_mode;
    int a = above_mode < 0 ? 0 : above_mode;
    if (l == a) {
        if (l < 2) return {0, 1, 26};
        return {l, 2 + ((l - 2 - 1 + 32) & 31), 2 + ((l - 2 + 1) & 31)};
    }
    std::array<int, 3> m{l, a, 0};
    for (int c : {0, 1, 26})
        if (c != l && c != a) {
            m[2] = c;
            break;
        }
    return m;
}

// Chroma candidate list: derived mode first, then planar/vertical/horizontal/
// DC with the duplicate of the luma mode replaced by angular 34.
inline int chroma_mode_from_idx(int luma_mode, int idx) {
    if (idx == 0) return luma_mode;
    static const int cand[4] = {0, 26, 10, 1};
    int m = cand[idx - 1];
    return m == luma_mode ? 34 : m;
}

// ---- transforms ------------------------------------------------------------

inline const double* dct_basis(int n) {
    static const std::vector<double> b4 = [] {
        std::vector<double> t(16);
        double pi = std::acos(-1.0);
        for (int u = 0; u < 4; u++)
            for (int x = 0; x < 4; x++)
                t[u * 4 + x] = (u == 0 ? std::sqrt(0.25) : std::sqrt(0.5)) *
                               std::cos((2 * x + 1) * u * pi / 8.0);
        return t;
    }();
    static const std::vector<double> b8 = [] {
        std::vector<double> t(64);
        double pi = std::acos(-1.0);
        for (int u = 0; u < 8; u++)
            for (int x = 0; x < 8; x++)
                t[u * 8 + x] = (u == 0 ? std::sqrt(0.125) : std::sqrt(0.25)) *
                               std::cos((2 * x + 1) * u * pi / 16.0);
        return t;
    }();
    return n == 4 ? b4.data() : b8.data();
}

inline void fwd_dct2(const int32_t* r, int n, double* out) {
    const double* T = dct_basis(n);
    double tmp[64];
    for (int u = 0; u < n; u++)
        for (int x = 0; x < n; x++) {
            double s = 0;
            for (int k = 0; k < n; k++) s += T[u * n + k] * r[k * n + x];
            tmp[u * n + x] = s;
        }
    for (int u = 0; u < n; u++)
        for (int v = 0; v < n; v++) {
            double s = 0;
            for (int k = 0; k < n; k++) s += tmp[u * n + k] * T[v * n + k];
            out[u * n + v] = s;
        }
}

inline void inv_dct2(const double* c, int n, double* out) {
    const double* T = dct_basis(n);
    double tmp[64];
    for (int x = 0; x < n; x++)
        for (int v = 0; v < n; v++) {
            double s = 0;
            for (int k = 0; k < n; k++) s += T[k * n + x] * c[k * n + v];
            tmp[x * n + v] = s;
        }
    for (int x = 0; x < n; x++)
        for (int y = 0; y < n; y++) {
            double s = 0;
            for (int k = 0; k < n; k++) s += tmp[x * n + k] * T[k * n + y];
            out[x * n + y] = s;
        }
}

inline double qstep_for(int qp) { return std::pow(2.0, (qp - 4) / 6.0); }

// Diagonal up-right scan; maps scan position to raster index.
inline const std::vector<int>& diag_scan(int n) {
    static const auto make = [](int m) {
        std::vector<int> s;
        s.reserve((size_t)m * m);
        for (int d = 0; d <= 2 * m - 2; d++)
            for (int y = std::min(d, m - 1); y >= 0 && d - y < m; y--) s.push_back(y * m + (d - y));
        return s;
    };
    static const std::vector<int> s4 = make(4);
    static const std::vector<int> s8 = make(8);
    return n == 4 ? s4 : s8;
}

inline std::vector<int32_t> quantize_block(const int32_t* resid, int n, double qstep) {
    double coef[64];
    fwd_dct2(resid, n, coef);
    const std::vector<int>& scan = diag_scan(n);
    std::vector<int32_t> out((size_t)n * n);
    for (int s = 0; s < n * n; s++) out[s] = (int32_t)std::llround(coef[scan[s]] / qstep);
    return out;
}

inline void reconstruct_block(const std::vector<int32_t>& levels, int n, double qstep,
                              int32_t* resid) {
    double coef[64] = {0};
    const std::vector<int>& scan = diag_scan(n);
    for (int s = 0; s < n * n; s++) coef[scan[s]] = (double)levels[s] * qstep;
    double r[64];
    inv_dct2(coef, n, r);
    for (int i = 0; i < n * n; i++) resid[i] = (int32_t)std::llround(r[i]);
}

// ---- motion ----------------------------------------------------------------

// pred(x,y) = ref(x - mvx, y - mvy), reads clamped to the frame.
inline void mc_block(const uint8_t* plane, int W, int H, int bx, int by, int w, int h, int mvx,
                     int mvy, uint8_t* dst) {
    for (int j = 0; j < h; j++)
        for (int i = 0; i < w; i++) {
            int sx = clip3(0, W - 1, bx + i - mvx);
            int sy = clip3(0, H - 1, by + j - mvy);
            dst[j * w + i] = plane[(size_t)sy * W + sx];
        }
}

inline int sad_block(const uint8_t* a, int astride, const uint8_t* b, int bstride, int w, int h) {
    int s = 0;
    for (int j = 0; j < h; j++)
        for (int i = 0; i < w; i++)
            s += std::abs((int)a[(size_t)j * astride + i] - (int)b[(size_t)j * bstride + i]);
    return s;
}

// ---- per-frame unit bookkeeping -------------------------------------------

struct CuInfo {
    bool coded = false;
    bool is_intra = true;
    uint8_t luma_mode = 1;
    MotionVector mv;
    int ref_idx = 0;
};

struct CuState {
    int cols = 0, rows = 0, cu = 16;
    std::vector<CuInfo> info;

    void reset(int W, int H, int cu_sz) {
        cu = cu_sz;
        cols = ceil_div(W, cu_sz);
        rows = ceil_div(H, cu_sz);
        info.assign((size_t)cols * rows, CuInfo{});
    }

    CuInfo& at(int x, int y) { return info[(size_t)(y / cu) * cols + (x / cu)]; }

    // Neighbor lookup honoring tile boundaries and coding order.
    const CuInfo* coded_at(int x, int y, const PixelRegion& tile) const {
        if (!tile.contains(x, y)) return nullptr;
        const CuInfo& ci = info[(size_t)(y / cu) * cols + (x / cu)];
        return ci.coded ? &ci : nullptr;
    }
};

struct MergeCand {
    MotionVector mv;
    int ref_idx = 0;
};

// Spatial merge candidates in A1, B1, B0, A0, B2 order, deduplicated and
// zero-padded to five entries.
inline std::array<MergeCand, 5> build_merge_list(const CuState& st, const PixelRegion& tile,
                                                 int cx, int cy, int n) {
    std::array<MergeCand, 5> list{};
    int cnt = 0;
    const int px[5] = {cx - 1, cx + n - 1, cx + n, cx - 1, cx - 1};
    const int py[5] = {cy + n - 1, cy - 1, cy - 1, cy + n, cy - 1};
    for (int i = 0; i < 5 && cnt < 5; i++) {
        const CuInfo* ci = st.coded_at(px[i], py[i], tile);
        if (!ci || ci->is_intra) continue;
        bool dup = false;
        for (int j = 0; j < cnt; j++)
            if (list[j].mv == ci->mv && list[j].ref_idx == ci->ref_idx) dup = true;
        if (!dup) list[cnt++] = {ci->mv, ci->ref_idx};
    }
    return list;
}

// Two motion vector predictors from left/above/above-left, deduplicated,
// zero-padded.
inline std::array<MotionVector, 2> build_mvp_list(const CuState& st, const PixelRegion& tile,
                                                  int cx, int cy) {
    std::array<MotionVector, 2> out{};
    int cnt = 0;
    const int px[3] = {cx - 1, cx, cx - 1};
    const int py[3] = {cy, cy - 1, cy - 1};
    for (int i = 0; i < 3 && cnt < 2; i++) {
        const CuInfo* ci = st.coded_at(px[i], py[i], tile);
        if (!ci || ci->is_intra) continue;
        bool dup = false;
        for (int j = 0; j < cnt; j++)
            if (out[j] == ci->mv) dup = true;
        if (!dup) out[cnt++] = ci->mv;
    }
    return out;
}

// ---- reference window ------------------------------------------------------

struct RefEntry {
    Frame frame;
    TileClassification cls;
    std::vector<uint32_t> roi_integral;  // (W+1)*(H+1) summed mask; empty if no ROI
};

inline std::vector<uint32_t> build_roi_integral(const TileClassification& c) {
    int W = c.grid.frame_w, H = c.grid.frame_h;
    std::vector<uint8_t> m = pixel_mask(c);
    std::vector<uint32_t> s((size_t)(W + 1) * (H + 1), 0);
    for (int y = 0; y < H; y++)
        for (int x = 0; x < W; x++)
            s[(size_t)(y + 1) * (W + 1) + x + 1] = m[(size_t)y * W + x] +
                                                   s[(size_t)y * (W + 1) + x + 1] +
                                                   s[(size_t)(y + 1) * (W + 1) + x] -
                                                   s[(size_t)y * (W + 1) + x];
    return s;
}

inline bool region_touches_roi(const RefEntry& ref, int x1, int y1, int x2, int y2) {
    if (ref.roi_integral.empty()) return false;
    int W = ref.cls.grid.frame_w, H = ref.cls.grid.frame_h;
    x1 = clip3(0, W - 1, x1);
    x2 = clip3(0, W - 1, x2);
    y1 = clip3(0, H - 1, y1);
    y2 = clip3(0, H - 1, y2);
    const uint32_t* s = ref.roi_integral.data();
    auto S = [&](int x, int y) { return s[(size_t)y * (W + 1) + x]; };
    return S(x2 + 1, y2 + 1) - S(x1, y2 + 1) - S(x2 + 1, y1) + S(x1, y1) > 0;
}

// Units outside the protected tiles may only reference areas whose
// reconstruction is key-independent; the clamped read window (inflated by two
// samples for the chroma grid) must stay clear of the reference's protected
// tiles.
inline bool motion_is_safe(const RefEntry& ref, int cx, int cy, int n, MotionVector mv) {
    return !region_touches_roi(ref, cx - mv.x - 2, cy - mv.y - 2, cx + n - 1 - mv.x + 2,
                               cy + n - 1 - mv.y + 2);
}

// ---- per-unit delta QP -----------------------------------------------------

// Deliberately small plain-domain range: the emitted magnitudes stay short,
// which is what makes the index-space redraw at the higher cipher levels
// visible in the rate.
inline int position_dqp(int frame, int cx, int cy, int max_dqp) {
    int r = std::min(2, max_dqp);
    uint64_t h = fnv1a64_mix(
        fnv1a64_mix(fnv1a64_mix(0x8ad4f09b64a213c7ull, (uint64_t)(uint32_t)frame),
                    (uint64_t)(uint32_t)cx),
        (uint64_t)(uint32_t)cy);
    return (int)(h % (uint64_t)(2 * r + 1)) - r;
}

// ---- element layer ---------------------------------------------------------

enum CtxIdx {
    CTX_PRED_MODE,
    CTX_MPM_FLAG,
    CTX_MPM_IDX,
    CTX_IPM_REM,
    CTX_CHROMA0,
    CTX_CHROMA1,
    CTX_MERGE_FLAG,
    CTX_REF_IDX,
    CTX_MVP_IDX,
    CTX_DQP,
    CTX_LAST_L,
    CTX_LAST_C,
    CTX_SIG_L,
    CTX_SIG_C,
    CTX_GT1_L,
    CTX_GT1_C,
    CTX_GT2_L,
    CTX_GT2_C,
    CTX_COUNT
};

constexpr uint8_t kCtxInit[CTX_COUNT] = {154, 184, 154, 154, 152, 139, 110, 153, 168,
                                         154, 140, 140, 141, 94,  140, 154, 122, 137};

constexpr int kSafeValueLimit = 1 << 20;  // sanity bound for open-ended parses

class ElementIo {
protected:
    ElementIo(ElementCipher* ciph, bool roi_tile, std::vector<ElemKind>* trace)
        : ciph_(ciph && roi_tile ? ciph : nullptr), trace_(trace) {}

    int32_t filt(ElemKind k, int32_t v, const CipherCtx& cc = {}) {
        if (trace_) trace_->push_back(k);
        return ciph_ ? ciph_->apply(k, v, cc) : v;
    }

    void note(ElemKind k) {
        if (trace_) trace_->push_back(k);
    }

    ElementCipher* ciph_;
    std::vector<ElemKind>* trace_;
};

class TileWriter : public ElementIo {
public:
    TileWriter(int qp, ElementCipher* ciph, bool roi_tile, std::vector<ElemKind>* trace)
        : ElementIo(ciph, roi_tile, trace) {
        for (int i = 0; i < CTX_COUNT; i++) ctx_[i].init(qp, kCtxInit[i]);
    }

    void put_pred_mode(bool is_intra) { enc_.encode_bit(ctx_[CTX_PRED_MODE], is_intra ? 1 : 0); }

    void put_intra_luma(int mpm_flag, int mpm_idx, int rem) {
        int f = filt(ElemKind::LumaIpmMpmFlag, mpm_flag);
        enc_.encode_bit(ctx_[CTX_MPM_FLAG], f);
        if (mpm_flag) {
            int v = filt(ElemKind::LumaIpmMpmIdx, mpm_idx);
            for (int i = 0; i < v; i++) enc_.encode_bit(ctx_[CTX_MPM_IDX], 1);
            if (v < 2) enc_.encode_bit(ctx_[CTX_MPM_IDX], 0);
        } else {
            int v = filt(ElemKind::LumaIpmRem, rem);
            for (int b = 4; b >= 0; b--) enc_.encode_bit(ctx_[CTX_IPM_REM], (v >> b) & 1);
        }
    }

    void put_chroma_mode(int idx) {
        int v = filt(ElemKind::ChromaIpm, idx);
        for (int i = 0; i < v; i++) enc_.encode_bit(ctx_[i == 0 ? CTX_CHROMA0 : CTX_CHROMA1], 1);
        if (v < 4) enc_.encode_bit(ctx_[v == 0 ? CTX_CHROMA0 : CTX_CHROMA1], 0);
    }

    void put_merge_flag(int f) {
        int v = filt(ElemKind::MergeFlag, f);
        enc_.encode_bit(ctx_[CTX_MERGE_FLAG], v);
    }

    void put_merge_idx(int idx) {
        int v = filt(ElemKind::MergeIdx, idx);
        for (int b = 2; b >= 0; b--) enc_.encode_bypass((v >> b) & 1);
    }

    void put_ref_idx(int r, int rn) {
        if (rn < 2) return;
        CipherCtx cc;
        cc.rn = rn;
        int v = filt(ElemKind::RefFrmIdx, r, cc);
        enc_.encode_bit(ctx_[CTX_REF_IDX], 1);
        for (int b = bits_for((uint32_t)rn) - 1; b >= 0; b--) enc_.encode_bypass((v >> b) & 1);
    }

    void put_mvp_idx(int i) {
        int v = filt(ElemKind::MvpIdx, i);
        enc_.encode_bit(ctx_[CTX_MVP_IDX], v);
    }

    void put_mvd(int dx, int dy) {
        put_mvd_comp(ElemKind::MvdValH, ElemKind::MvdSignH, dx);
        put_mvd_comp(ElemKind::MvdValV, ElemKind::MvdSignV, dy);
    }

    // Value cipher first, then the sign cipher on the post-value sign: two
    // keystream samples in emission order.
    void put_dqp(int dqp, int max_dqp) {
        CipherCtx cc;
        cc.max_dqp = max_dqp;
        note(ElemKind::DqpValue);
        std::optional<uint64_t> sv =
            ciph_ ? ciph_->draw_for(ElemKind::DqpValue, cc) : std::nullopt;
        int v = sv ? enc_dqp_value(dqp, max_dqp, (uint32_t)*sv) : dqp;
        int mag = v < 0 ? -v : v;
        int sign = v < 0 ? 1 : 0;
        if (ciph_ && v != 0) {
            CipherCtx c2;
            c2.dqp_nonzero = true;
            if (std::optional<uint64_t> ss = ciph_->draw_for(ElemKind::DqpSign, c2))
                sign ^= (int)*ss;
        }
        int q = mag < 5 ? mag : 5;
        for (int i = 0; i < q; i++) enc_.encode_bit(ctx_[CTX_DQP], 1);
        if (q < 5)
            enc_.encode_bit(ctx_[CTX_DQP], 0);
        else
            for (uint8_t b : eg_encode((uint32_t)(mag - 5), 0)) enc_.encode_bypass(b);
        if (mag != 0) {
            note(ElemKind::DqpSign);
            enc_.encode_bypass(sign);
        }
    }

    // One transform block in scan order. Coefficients run backwards from the
    // last significant position; the position n*n means an all-zero block.
    void put_tu(const std::vector<int32_t>& c, int n, bool luma) {
        int nn = n * n;
        int last = -1;
        for (int i = 0; i < nn; i++)
            if (c[i] != 0) last = i;
        note(ElemKind::LastPos);
        int lctx = luma ? CTX_LAST_L : CTX_LAST_C;
        int lbits = n == 4 ? 5 : 7;
        int lval = last < 0 ? nn : last;
        for (int b = lbits - 1; b >= 0; b--) enc_.encode_bit(ctx_[lctx], (lval >> b) & 1);
        if (last < 0) return;

        int sctx = luma ? CTX_SIG_L : CTX_SIG_C;
        int g1 = luma ? CTX_GT1_L : CTX_GT1_C;
        int g2 = luma ? CTX_GT2_L : CTX_GT2_C;
        int k = 0;
        for (int i = last; i >= 0; i--) {
            int sig = c[i] != 0;
            if (i < last) {
                note(ElemKind::CoefSigFlag);
                enc_.encode_bit(ctx_[sctx], sig);
            }
            if (!sig) continue;
            int32_t a = c[i] < 0 ? -c[i] : c[i];
            int gt1 = a > 1;
            note(ElemKind::CoefGt1);
            enc_.encode_bit(ctx_[g1], gt1);
            int gt2 = 0;
            if (gt1) {
                gt2 = a > 2;
                note(ElemKind::CoefGt2);
                enc_.encode_bit(ctx_[g2], gt2);
            }
            int sign = filt(ElemKind::CoefSign, c[i] < 0 ? 1 : 0);
            enc_.encode_bypass(sign);
            if (gt2) {
                CipherCtx cc;
                cc.rice_k = k;
                uint32_t v = (uint32_t)filt(ElemKind::CoefRemaining, a - 3, cc);
                uint32_t q = v >> k;
                if (q < 4) {
                    for (uint32_t t = 0; t < q; t++) enc_.encode_bypass(1);
                    enc_.encode_bypass(0);
                    for (int b = k - 1; b >= 0; b--) enc_.encode_bypass((int)((v >> b) & 1));
                } else {
                    for (int t = 0; t < 4; t++) enc_.encode_bypass(1);
                    for (uint8_t b : eg_encode(v - (4u << k), k + 1)) enc_.encode_bypass(b);
                }
                if (q >= 3 && k < 4) k++;  // prefix-driven, cipher-invariant
            }
        }
    }

    Payload finish() { return enc_.finish(); }

private:
    void put_mvd_comp(ElemKind kv, ElemKind ks, int d) {
        uint32_t v = (uint32_t)filt(kv, d < 0 ? -d : d);
        for (uint8_t b : eg_encode(v, kMvdEgOrder)) enc_.encode_bypass(b);
        enc_.encode_bypass(filt(ks, d < 0 ? 1 : 0));
    }

    ArithEncoder enc_;
    ContextModel ctx_[CTX_COUNT];
};

class TileReader : public ElementIo {
public:
    TileReader(const uint8_t* data, size_t size, int qp, ElementCipher* ciph, bool roi_tile,
               std::vector<ElemKind>* trace)
        : ElementIo(ciph, roi_tile, trace), dec_(data, size) {
        for (int i = 0; i < CTX_COUNT; i++) ctx_[i].init(qp, kCtxInit[i]);
    }

    bool get_pred_mode_is_intra() { return dec_.decode_bit(ctx_[CTX_PRED_MODE]) != 0; }

    struct IntraLuma {
        int mpm_flag = 0, mpm_idx = 0, rem = 0;
    };

    IntraLuma get_intra_luma() {
        int f = dec_.decode_bit(ctx_[CTX_MPM_FLAG]);
        f = filt(ElemKind::LumaIpmMpmFlag, f);
        if (f) {
            int v = 0;
            while (v < 2 && dec_.decode_bit(ctx_[CTX_MPM_IDX])) v++;
            return {1, filt(ElemKind::LumaIpmMpmIdx, v), 0};
        }
        int v = 0;
        for (int b = 0; b < 5; b++) v = (v << 1) | dec_.decode_bit(ctx_[CTX_IPM_REM]);
        return {0, 0, filt(ElemKind::LumaIpmRem, v)};
    }

    int get_chroma_mode_idx() {
        int v = 0;
        while (v < 4 && dec_.decode_bit(ctx_[v == 0 ? CTX_CHROMA0 : CTX_CHROMA1])) v++;
        return filt(ElemKind::ChromaIpm, v);
    }

    bool get_merge_flag() {
        return filt(ElemKind::MergeFlag, dec_.decode_bit(ctx_[CTX_MERGE_FLAG])) != 0;
    }

    int get_merge_idx() {
        int v = 0;
        for (int b = 0; b < 3; b++) v = (v << 1) | dec_.decode_bypass();
        if (v >= 5) throw CorruptStreamError("merge index out of range");
        return filt(ElemKind::MergeIdx, v);
    }

    int get_ref_idx(int rn) {
        if (rn < 2) return 0;
        if (dec_.decode_bit(ctx_[CTX_REF_IDX]) != 1)
            throw CorruptStreamError("bad reference index prefix");
        int v = 0;
        for (int b = 0; b < bits_for((uint32_t)rn); b++) v = (v << 1) | dec_.decode_bypass();
        if (v >= rn) throw CorruptStreamError("reference index out of range");
        CipherCtx cc;
        cc.rn = rn;
        return filt(ElemKind::RefFrmIdx, v, cc);
    }

    int get_mvp_idx() { return filt(ElemKind::MvpIdx, dec_.decode_bit(ctx_[CTX_MVP_IDX])); }

    MotionVector get_mvd() {
        MotionVector d;
        d.x = get_mvd_comp(ElemKind::MvdValH, ElemKind::MvdSignH);
        d.y = get_mvd_comp(ElemKind::MvdValV, ElemKind::MvdSignV);
        return d;
    }

    int get_dqp(int max_dqp) {
        CipherCtx cc;
        cc.max_dqp = max_dqp;
        note(ElemKind::DqpValue);
        std::optional<uint64_t> sv =
            ciph_ ? ciph_->draw_for(ElemKind::DqpValue, cc) : std::nullopt;
        int mag = 0;
        while (mag < 5 && dec_.decode_bit(ctx_[CTX_DQP])) mag++;
        if (mag == 5) mag += (int)eg_decode([&] { return dec_.decode_bypass(); }, 0);
        if (mag > kSafeValueLimit) throw CorruptStreamError("delta qp magnitude out of range");
        int sign = 0;
        if (mag != 0) {
            note(ElemKind::DqpSign);
            sign = dec_.decode_bypass();
            if (ciph_) {
                CipherCtx c2;
                c2.dqp_nonzero = true;
                if (std::optional<uint64_t> ss = ciph_->draw_for(ElemKind::DqpSign, c2))
                    sign ^= (int)*ss;
            }
        }
        int v = sign ? -mag : mag;
        if (!sv) return v;
        if (mag > max_dqp) throw CorruptStreamError("delta qp outside cipher range");
        return dec_dqp_value(v, max_dqp, (uint32_t)*sv);
    }

    std::vector<int32_t> get_tu(int n, bool luma) {
        int nn = n * n;
        std::vector<int32_t> c((size_t)nn, 0);
        note(ElemKind::LastPos);
        int lctx = luma ? CTX_LAST_L : CTX_LAST_C;
        int lbits = n == 4 ? 5 : 7;
        int last = 0;
        for (int b = 0; b < lbits; b++) last = (last << 1) | dec_.decode_bit(ctx_[lctx]);
        if (last == nn) return c;
        if (last > nn) throw CorruptStreamError("last position out of range");

        int sctx = luma ? CTX_SIG_L : CTX_SIG_C;
        int g1 = luma ? CTX_GT1_L : CTX_GT1_C;
        int g2 = luma ? CTX_GT2_L : CTX_GT2_C;
        int k = 0;
        for (int i = last; i >= 0; i--) {
            int sig = 1;
            if (i < last) {
                note(ElemKind::CoefSigFlag);
                sig = dec_.decode_bit(ctx_[sctx]);
            }
            if (!sig) continue;
            note(ElemKind::CoefGt1);
            int gt1 = dec_.decode_bit(ctx_[g1]);
            int gt2 = 0;
            if (gt1) {
                note(ElemKind::CoefGt2);
                gt2 = dec_.decode_bit(ctx_[g2]);
            }
            int sign = filt(ElemKind::CoefSign, dec_.decode_bypass());
            int32_t a;
            if (!gt1) {
                a = 1;
            } else if (!gt2) {
                a = 2;
            } else {
                uint32_t q = 0;
                while (q < 4 && dec_.decode_bypass()) q++;
                uint32_t v;
                if (q < 4) {
                    uint32_t suf = 0;
                    for (int b = 0; b < k; b++) suf = (suf << 1) | (uint32_t)dec_.decode_bypass();
                    v = (q << k) | suf;
                } else {
                    v = (4u << k) + eg_decode([&] { return dec_.decode_bypass(); }, k + 1);
                }
                if (v > (uint32_t)kSafeValueLimit)
                    throw CorruptStreamError("coefficient magnitude out of range");
                CipherCtx cc;
                cc.rice_k = k;
                a = 3 + filt(ElemKind::CoefRemaining, (int32_t)v, cc);
                if ((v >> k) >= 3 && k < 4) k++;
            }
            c[i] = sign ? -a : a;
        }
        return c;
    }

private:
    int get_mvd_comp(ElemKind kv, ElemKind ks) {
        uint32_t v = eg_decode([&] { return dec_.decode_bypass(); }, kMvdEgOrder);
        if (v > (uint32_t)kSafeValueLimit) throw CorruptStreamError("mvd out of range");
        v = (uint32_t)filt(kv, (int32_t)v);
        int sign = filt(ks, dec_.decode_bypass());
        return sign ? -(int)v : (int)v;
    }

    ArithDecoder dec_;
    ContextModel ctx_[CTX_COUNT];
};

// Luma transform blocks per tile, used to keep the scrambler's per-frame
// block counter aligned across independently parsed (or failed) tiles.
inline uint32_t luma_tu_count(const PixelRegion& tile, int tu) {
    return (uint32_t)((tile.width() / tu) * (tile.height() / tu));
}

}  // namespace codec_detail

// ---- public API ------------------------------------------------------------

struct EncodeOptions {
    CodecConfig cfg;
    const RoiMap* roi = nullptr;
    Level level = Level::None;
    const StreamKey* key = nullptr;
    std::optional<uint64_t> nonce;  // default: derived from key and content
    std::vector<ElemKind>* elem_trace = nullptr;
    std::vector<DrawRecord>* draw_trace = nullptr;
};

struct EncodeResult {
    Container container;
    VideoSequence recon;
    std::vector<TileClassification> tiles;
};

struct DecodeOptions {
    const StreamKey* key = nullptr;
    std::vector<ElemKind>* elem_trace = nullptr;
    std::vector<DrawRecord>* draw_trace = nullptr;
};

struct DecodeResult {
    VideoSequence video;
    std::vector<TileClassification> tiles;
};

// Content-bound default nonce so identical inputs produce identical streams
// while different content diverges.
inline uint64_t derive_nonce(const StreamKey& key, const VideoSequence& src) {
    uint64_t h = fnv1a64_mix(fnv1a64_mix(0xcbf29ce484222325ull, (uint64_t)src.spec.width),
                             (uint64_t)src.spec.height);
    for (const Frame& f : src.frames) {
        h = fnv1a64(f.y.data(), f.y.size(), h);
        h = fnv1a64(f.u.data(), f.u.size(), h);
        h = fnv1a64(f.v.data(), f.v.size(), h);
    }
    detail::Aes128 aes(key.bytes.data());
    uint8_t in[16], out[16];
    std::memcpy(in, "RSELNONC", 8);
    detail::put_be64(in + 8, h);
    aes.encrypt_block(in, out);
    uint64_t v = 0;
    for (int i = 0; i < 8; i++) v = (v << 8) | out[i];
    return v;
}

class SequenceEncoder {
public:
    explicit SequenceEncoder(const EncodeOptions& opt) : opt_(opt) {}

    EncodeResult run(const VideoSequence& src) {
        const CodecConfig& cfg = opt_.cfg;
        cfg.validate();
        spec_ = src.spec;
        if (spec_.width <= 0 || spec_.height <= 0 || spec_.width % cfg.cu_size != 0 ||
            spec_.height % cfg.cu_size != 0)
            throw RangeError("frame dimensions must be positive multiples of cu_size");
        if ((int)src.frames.size() != spec_.frame_count)
            throw RangeError("sequence frame count mismatch");
        if (opt_.level != Level::None && !opt_.key)
            throw RangeError("encryption level set but no key given");
        if (opt_.level == Level::None && opt_.key)
            throw RangeError("key given but level is none");

        nonce_ = opt_.nonce ? *opt_.nonce
                            : (opt_.key ? derive_nonce(*opt_.key, src) : 0);
        if (opt_.key) {
            key_ = *opt_.key;
            cipher_.emplace(key_, nonce_, opt_.level, CipherDir::Encrypt);
            cipher_->set_trace(opt_.draw_trace);
        }

        EncodeResult res;
        res.container.header.width = (uint32_t)spec_.width;
        res.container.header.height = (uint32_t)spec_.height;
        res.container.header.frame_count = (uint32_t)src.frames.size();
        res.container.header.tile_w = (uint32_t)cfg.tile_w;
        res.container.header.tile_h = (uint32_t)cfg.tile_h;
        res.container.header.cu_size = (uint32_t)cfg.cu_size;
        res.container.header.tu_size = (uint32_t)cfg.tu_size;
        res.container.header.qp = (uint32_t)cfg.qp;
        res.container.header.set_gop(cfg.gop);
        res.container.header.max_dqp = (uint32_t)cfg.max_dqp;
        res.container.header.max_ref_frames = (uint32_t)cfg.max_ref_frames;
        res.container.header.level = opt_.level;
        res.container.header.nonce = nonce_;
        res.recon.spec = spec_;

        TileGrid grid{spec_.width, spec_.height, cfg.tile_w, cfg.tile_h};
        for (int f = 0; f < (int)src.frames.size(); f++) {
            fidx_ = f;
            cur_ = &src.frames[f];
            Frame rec(spec_.width, spec_.height);
            rec_ = &rec;
            cls_ = classify_tiles(grid, opt_.roi ? opt_.roi->regions(f)
                                                 : std::vector<PixelRegion>{});
            edges_.clear();
            if (opt_.level == Level::Advanced && cls_.any())
                edges_ = canny(cur_->y.data(), spec_.width, spec_.height, cfg.canny);
            cus_.reset(spec_.width, spec_.height, cfg.cu_size);
            ftype_ = cfg.gop[f % cfg.gop.size()];
            rn_ = (int)window_.size();

            std::vector<uint8_t> payload((size_t)ceil_div(grid.count(), 8), 0);
            for (int t = 0; t < grid.count(); t++)
                if (cls_.roi[t]) payload[t >> 3] |= (uint8_t)(1u << (t & 7));

            uint32_t tu_base = 0;
            for (int ty = 0; ty < grid.rows(); ty++)
                for (int tx = 0; tx < grid.cols(); tx++) {
                    PixelRegion tr = grid.tile_rect(tx, ty);
                    bool roi_tile = cls_.is_roi(tx, ty);
                    tu_counter_ = tu_base;
                    codec_detail::TileWriter w(cfg.qp, cipher_ ? &*cipher_ : nullptr, roi_tile,
                                               opt_.elem_trace);
                    for (int cy = tr.y1; cy < tr.y2; cy += cfg.cu_size)
                        for (int cx = tr.x1; cx < tr.x2; cx += cfg.cu_size)
                            encode_cu(w, cx, cy, roi_tile, tr);
                    Payload p = w.finish();
                    detail::put_u32le(payload, (uint32_t)p.bytes.size());
                    payload.insert(payload.end(), p.bytes.begin(), p.bytes.end());
                    tu_base += codec_detail::luma_tu_count(tr, cfg.tu_size);
                }

            res.container.frame_payloads.push_back(std::move(payload));
            res.tiles.push_back(cls_);

            codec_detail::RefEntry entry;
            entry.frame = rec;
            entry.cls = cls_;
            if (cls_.any()) entry.roi_integral = codec_detail::build_roi_integral(cls_);
            window_.insert(window_.begin(), std::move(entry));
            if ((int)window_.size() > cfg.max_ref_frames) window_.resize(cfg.max_ref_frames);
            res.recon.frames.push_back(std::move(rec));
        }
        return res;
    }

private:
    struct InterPick {
        bool valid = false;
        bool use_merge = false;
        int merge_idx = 0;
        int ref = 0;
        MotionVector mv;
        int mvp_idx = 0;
        MotionVector mvd;
        int sad = INT_MAX;
    };

    void encode_cu(codec_detail::TileWriter& w, int cx, int cy, bool roi_tile,
                   const PixelRegion& tile) {
        using namespace codec_detail;
        const CodecConfig& cfg = opt_.cfg;
        int cu = cfg.cu_size, W = spec_.width, H = spec_.height;

        // intra candidate (always needed: fallback + decision threshold)
        IntraNeighbors nb = gather_neighbors(rec_->y.data(), W, tile, cx, cy, cu);
        auto nb_mode = [&](int x, int y) -> int {
            const CuInfo* ci = cus_.coded_at(x, y, tile);
            return ci && ci->is_intra ? ci->luma_mode : -1;
        };
        int best_mode = 0, intra_sad = INT_MAX;
        uint8_t pred[256], cand[256];
        for (int m = 0; m < 35; m++) {
            predict_intra(m, nb, cu, cand);
            int s = sad_block(&cur_->y[(size_t)cy * W + cx], W, cand, cu, cu, cu);
            if (s < intra_sad) {
                intra_sad = s;
                best_mode = m;
                std::memcpy(pred, cand, (size_t)cu * cu);
            }
        }

        // inter candidate on non-key frames
        InterPick pick;
        bool inter_frame = ftype_ != 'I';
        if (inter_frame) pick = pick_inter(cx, cy, roi_tile, tile);

        bool is_intra = !pick.valid || pick.sad > 2 * intra_sad;
        if (inter_frame) w.put_pred_mode(is_intra);

        int dqp = position_dqp(fidx_, cx, cy, cfg.max_dqp);
        int cu_qp = clip3(0, 51, cfg.qp + dqp);
        double qstep = qstep_for(cu_qp);

        int hcu = cu / 2, cw = W / 2, chh = H / 2;
        PixelRegion ctile = chroma_region(tile);
        uint8_t pred_u[64], pred_v[64];

        if (is_intra) {
            // luma mode: most-probable list or rank among the remaining
            auto mpm = build_mpm_list(nb_mode(cx - 1, cy), nb_mode(cx, cy - 1));
            int in_mpm = -1;
            for (int i = 0; i < 3; i++)
                if (mpm[i] == best_mode) in_mpm = i;
            if (in_mpm >= 0) {
                w.put_intra_luma(1, in_mpm, 0);
            } else {
                int rem = 0;
                for (int m = 0; m < best_mode; m++)
                    if (m != mpm[0] && m != mpm[1] && m != mpm[2]) rem++;
                w.put_intra_luma(0, 0, rem);
            }

            IntraNeighbors nbu = gather_neighbors(rec_->u.data(), cw, ctile, cx / 2, cy / 2, hcu);
            IntraNeighbors nbv = gather_neighbors(rec_->v.data(), cw, ctile, cx / 2, cy / 2, hcu);
            int best_ci = 0, best_cs = INT_MAX;
            uint8_t cu8[64], cv8[64];
            for (int i = 0; i < 5; i++) {
                int m = chroma_mode_from_idx(best_mode, i);
                predict_intra(m, nbu, hcu, cu8);
                predict_intra(m, nbv, hcu, cv8);
                int s = sad_block(&cur_->u[(size_t)(cy / 2) * cw + cx / 2], cw, cu8, hcu, hcu,
                                  hcu) +
                        sad_block(&cur_->v[(size_t)(cy / 2) * cw + cx / 2], cw, cv8, hcu, hcu,
                                  hcu);
                if (s < best_cs) {
                    best_cs = s;
                    best_ci = i;
                    std::memcpy(pred_u, cu8, sizeof cu8);
                    std::memcpy(pred_v, cv8, sizeof cv8);
                }
            }
            w.put_chroma_mode(best_ci);

            CuInfo& ci = cus_.at(cx, cy);
            ci = {true, true, (uint8_t)best_mode, {}, 0};
        } else {
            const RefEntry& re = window_[(size_t)pick.ref];
            mc_block(re.frame.y.data(), W, H, cx, cy, cu, cu, pick.mv.x, pick.mv.y, pred);
            mc_block(re.frame.u.data(), cw, chh, cx / 2, cy / 2, hcu, hcu, pick.mv.x >> 1,
                     pick.mv.y >> 1, pred_u);
            mc_block(re.frame.v.data(), cw, chh, cx / 2, cy / 2, hcu, hcu, pick.mv.x >> 1,
                     pick.mv.y >> 1, pred_v);

            w.put_merge_flag(pick.use_merge ? 1 : 0);
            if (pick.use_merge) {
                w.put_merge_idx(pick.merge_idx);
            } else {
                w.put_ref_idx(pick.ref, rn_);
                w.put_mvp_idx(pick.mvp_idx);
                w.put_mvd(pick.mvd.x, pick.mvd.y);
            }

            CuInfo& ci = cus_.at(cx, cy);
            ci = {true, false, 1, pick.mv, pick.ref};
        }

        w.put_dqp(dqp, cfg.max_dqp);

        // luma blocks
        int tu = cfg.tu_size;
        bool scramble = opt_.level == Level::Advanced && roi_tile;
        for (int by = 0; by < cu; by += tu)
            for (int bx = 0; bx < cu; bx += tu) {
                int32_t resid[64];
                for (int j = 0; j < tu; j++)
                    for (int i = 0; i < tu; i++)
                        resid[j * tu + i] = (int)cur_->Y(cx + bx + i, cy + by + j) -
                                            (int)pred[(by + j) * cu + bx + i];
                std::vector<int32_t> levels = quantize_block(resid, tu, qstep);
                std::vector<int32_t> coded = levels;
                if (scramble) {
                    PixelRegion tr{cx + bx, cy + by, cx + bx + tu, cy + by + tu};
                    bool edge = tu_is_edge(edges_, W, H, tr);
                    scramble_tu(coded,
                                derive_chaotic_params(key_, nonce_, (uint32_t)fidx_, tu_counter_),
                                edge);
                }
                tu_counter_++;
                w.put_tu(coded, tu, true);

                int32_t rr[64];
                reconstruct_block(levels, tu, qstep, rr);
                for (int j = 0; j < tu; j++)
                    for (int i = 0; i < tu; i++)
                        rec_->Y(cx + bx + i, cy + by + j) =
                            clip_pixel((int)pred[(by + j) * cu + bx + i] + rr[j * tu + i]);
            }

        // chroma blocks, U then V
        int ctu = tu <= hcu ? tu : hcu;
        for (int plane = 0; plane < 2; plane++) {
            const uint8_t* sp = plane == 0 ? cur_->u.data() : cur_->v.data();
            uint8_t* rp = plane == 0 ? rec_->u.data() : rec_->v.data();
            const uint8_t* pp = plane == 0 ? pred_u : pred_v;
            for (int by = 0; by < hcu; by += ctu)
                for (int bx = 0; bx < hcu; bx += ctu) {
                    int32_t resid[64];
                    for (int j = 0; j < ctu; j++)
                        for (int i = 0; i < ctu; i++)
                            resid[j * ctu + i] =
                                (int)sp[(size_t)(cy / 2 + by + j) * cw + cx / 2 + bx + i] -
                                (int)pp[(by + j) * hcu + bx + i];
                    std::vector<int32_t> levels = quantize_block(resid, ctu, qstep);
                    w.put_tu(levels, ctu, false);
                    int32_t rr[64];
                    reconstruct_block(levels, ctu, qstep, rr);
                    for (int j = 0; j < ctu; j++)
                        for (int i = 0; i < ctu; i++)
                            rp[(size_t)(cy / 2 + by + j) * cw + cx / 2 + bx + i] = clip_pixel(
                                (int)pp[(by + j) * hcu + bx + i] + rr[j * ctu + i]);
                }
        }
    }

    InterPick pick_inter(int cx, int cy, bool roi_tile, const PixelRegion& tile) {
        using namespace codec_detail;
        const CodecConfig& cfg = opt_.cfg;
        int cu = cfg.cu_size, W = spec_.width, H = spec_.height, R = cfg.search_range;
        bool restricted = !roi_tile;
        const uint8_t* src = &cur_->y[(size_t)cy * W + cx];
        uint8_t buf[256];

        InterPick pick;

        auto ml = build_merge_list(cus_, tile, cx, cy, cu);
        int msad = INT_MAX, midx = -1;
        MergeCand mbest;
        for (int i = 0; i < 5; i++) {
            const MergeCand& c = ml[i];
            if (c.ref_idx >= rn_) continue;
            const RefEntry& re = window_[(size_t)c.ref_idx];
            if (restricted && !motion_is_safe(re, cx, cy, cu, c.mv)) continue;
            mc_block(re.frame.y.data(), W, H, cx, cy, cu, cu, c.mv.x, c.mv.y, buf);
            int s = sad_block(src, W, buf, cu, cu, cu);
            if (s < msad) {
                msad = s;
                midx = i;
                mbest = c;
            }
        }

        // full search; ties resolve to (ref, |mv|, y, x) ascending
        std::array<int, 5> abest{INT_MAX, 0, 0, 0, 0};
        MotionVector amv;
        int aref = 0;
        bool afound = false;
        for (int r = 0; r < rn_; r++) {
            const RefEntry& re = window_[(size_t)r];
            for (int dy = -R; dy <= R; dy++)
                for (int dx = -R; dx <= R; dx++) {
                    MotionVector v{dx, dy};
                    if (restricted && !motion_is_safe(re, cx, cy, cu, v)) continue;
                    mc_block(re.frame.y.data(), W, H, cx, cy, cu, cu, dx, dy, buf);
                    int s = sad_block(src, W, buf, cu, cu, cu);
                    std::array<int, 5> key{s, r, std::abs(dx) + std::abs(dy), dy, dx};
                    if (key < abest) {
                        abest = key;
                        amv = v;
                        aref = r;
                        afound = true;
                    }
                }
        }

        if (midx < 0 && !afound) return pick;  // nothing referencable: forced intra

        if (midx >= 0 && (!afound || msad <= abest[0])) {
            pick.valid = true;
            pick.use_merge = true;
            pick.merge_idx = midx;
            pick.ref = mbest.ref_idx;
            pick.mv = mbest.mv;
            pick.sad = msad;
            return pick;
        }

        auto mvps = build_mvp_list(cus_, tile, cx, cy);
        int c0 = std::abs(amv.x - mvps[0].x) + std::abs(amv.y - mvps[0].y);
        int c1 = std::abs(amv.x - mvps[1].x) + std::abs(amv.y - mvps[1].y);
        int mi = c1 < c0 ? 1 : 0;
        pick.valid = true;
        pick.use_merge = false;
        pick.ref = aref;
        pick.mv = amv;
        pick.mvp_idx = mi;
        pick.mvd = {amv.x - mvps[mi].x, amv.y - mvps[mi].y};
        pick.sad = abest[0];
        return pick;
    }

    EncodeOptions opt_;
    VideoSpec spec_;
    uint64_t nonce_ = 0;
    StreamKey key_;
    std::optional<ElementCipher> cipher_;
    std::vector<codec_detail::RefEntry> window_;

    const Frame* cur_ = nullptr;
    Frame* rec_ = nullptr;
    TileClassification cls_;
    std::vector<uint8_t> edges_;
    codec_detail::CuState cus_;
    char ftype_ = 'I';
    int fidx_ = 0;
    int rn_ = 0;
    uint32_t tu_counter_ = 0;
};

class SequenceDecoder {
public:
    SequenceDecoder(const Container& c, const DecodeOptions& opt) : c_(c), opt_(opt) {
        const ContainerHeader& h = c.header;
        cfg_.qp = (int)h.qp;
        cfg_.cu_size = (int)h.cu_size;
        cfg_.tu_size = (int)h.tu_size;
        cfg_.tile_w = (int)h.tile_w;
        cfg_.tile_h = (int)h.tile_h;
        cfg_.gop = h.gop_string();
        cfg_.max_ref_frames = (int)h.max_ref_frames;
        cfg_.max_dqp = (int)h.max_dqp;
        try {
            cfg_.validate();
        } catch (const RangeError& e) {
            throw CorruptStreamError(std::string("bad header: ") + e.what());
        }
        spec_.width = (int)h.width;
        spec_.height = (int)h.height;
        spec_.frame_count = (int)h.frame_count;
        if (spec_.width <= 0 || spec_.height <= 0 || spec_.width % cfg_.cu_size != 0 ||
            spec_.height % cfg_.cu_size != 0)
            throw CorruptStreamError("bad header: frame dimensions");
        if (opt_.key) {
            if (h.level == Level::None) throw RangeError("container is not encrypted");
            key_ = *opt_.key;
            keyed_ = true;
            cipher_.emplace(key_, h.nonce, h.level, CipherDir::Decrypt);
            cipher_->set_trace(opt_.draw_trace);
        }
    }

    DecodeResult run() {
        DecodeResult res;
        res.video.spec = spec_;
        TileGrid grid{spec_.width, spec_.height, cfg_.tile_w, cfg_.tile_h};
        for (int f = 0; f < (int)c_.frame_payloads.size(); f++) {
            fidx_ = f;
            ftype_ = cfg_.gop[f % cfg_.gop.size()];
            rn_ = (int)window_.size();
            cus_.reset(spec_.width, spec_.height, cfg_.cu_size);
            Frame rec(spec_.width, spec_.height);
            rec_ = &rec;

            // Damage containment has two rings: a tile whose arithmetic chunk
            // fails to parse turns gray while its neighbors survive; a frame
            // whose payload structure is broken turns gray entirely and
            // decoding resumes at the next frame.
            try {
                const std::vector<uint8_t>& pl = c_.frame_payloads[f];
                size_t bmb = (size_t)ceil_div(grid.count(), 8);
                if (pl.size() < bmb)
                    throw CorruptStreamError("frame " + std::to_string(f) +
                                             ": payload too short");
                cls_.grid = grid;
                cls_.roi.assign((size_t)grid.count(), 0);
                for (int t = 0; t < grid.count(); t++)
                    cls_.roi[t] = (pl[t >> 3] >> (t & 7)) & 1;

                size_t off = bmb;
                uint32_t tu_base = 0;
                for (int ty = 0; ty < grid.rows(); ty++)
                    for (int tx = 0; tx < grid.cols(); tx++) {
                        if (off + 4 > pl.size())
                            throw CorruptStreamError("frame " + std::to_string(f) +
                                                     ": tile table truncated");
                        uint32_t len = 0;
                        for (int i = 0; i < 4; i++) len |= (uint32_t)pl[off + i] << (8 * i);
                        off += 4;
                        if (off + len > pl.size())
                            throw CorruptStreamError("frame " + std::to_string(f) +
                                                     ": tile chunk truncated");
                        PixelRegion tr = grid.tile_rect(tx, ty);
                        bool roi_tile = cls_.is_roi(tx, ty);
                        tu_counter_ = tu_base;
                        try {
                            codec_detail::TileReader r(pl.data() + off, len, cfg_.qp,
                                                       cipher_ ? &*cipher_ : nullptr, roi_tile,
                                                       opt_.elem_trace);
                            for (int cy = tr.y1; cy < tr.y2; cy += cfg_.cu_size)
                                for (int cx = tr.x1; cx < tr.x2; cx += cfg_.cu_size)
                                    decode_cu(r, cx, cy, roi_tile, tr);
                        } catch (const Error&) {
                            fill_gray(tr);
                            for (int cy = tr.y1; cy < tr.y2; cy += cfg_.cu_size)
                                for (int cx = tr.x1; cx < tr.x2; cx += cfg_.cu_size)
                                    cus_.at(cx, cy) = codec_detail::CuInfo{};
                        }
                        off += len;
                        tu_base += codec_detail::luma_tu_count(tr, cfg_.tu_size);
                    }
                if (off != pl.size())
                    throw CorruptStreamError("frame " + std::to_string(f) + ": trailing bytes");
            } catch (const Error&) {
                fill_gray(PixelRegion{0, 0, spec_.width, spec_.height});
                cls_.grid = grid;
                cls_.roi.assign((size_t)grid.count(), 0);
                cus_.reset(spec_.width, spec_.height, cfg_.cu_size);
            }

            codec_detail::RefEntry entry;
            entry.frame = rec;
            entry.cls = cls_;
            window_.insert(window_.begin(), std::move(entry));
            if ((int)window_.size() > cfg_.max_ref_frames) window_.resize(cfg_.max_ref_frames);
            res.video.frames.push_back(std::move(rec));
            res.tiles.push_back(cls_);
        }
        return res;
    }

private:
    void decode_cu(codec_detail::TileReader& r, int cx, int cy, bool roi_tile,
                   const PixelRegion& tile) {
        using namespace codec_detail;
        int cu = cfg_.cu_size, W = spec_.width, H = spec_.height;
        int hcu = cu / 2, cw = W / 2, chh = H / 2;
        PixelRegion ctile = chroma_region(tile);

        bool is_intra = true;
        if (ftype_ != 'I') is_intra = r.get_pred_mode_is_intra();

        uint8_t pred[256], pred_u[64], pred_v[64];
        if (is_intra) {
            TileReader::IntraLuma il = r.get_intra_luma();
            auto nb_mode = [&](int x, int y) -> int {
                const CuInfo* ci = cus_.coded_at(x, y, tile);
                return ci && ci->is_intra ? ci->luma_mode : -1;
            };
            auto mpm = build_mpm_list(nb_mode(cx - 1, cy), nb_mode(cx, cy - 1));
            int mode;
            if (il.mpm_flag) {
                mode = mpm[il.mpm_idx];
            } else {
                int cnt = -1;
                mode = 0;
                for (int m = 0; m < 35; m++) {
                    if (m == mpm[0] || m == mpm[1] || m == mpm[2]) continue;
                    if (++cnt == il.rem) {
                        mode = m;
                        break;
                    }
                }
            }
            int cidx = r.get_chroma_mode_idx();
            int cmode = chroma_mode_from_idx(mode, cidx);

            IntraNeighbors nb = gather_neighbors(rec_->y.data(), W, tile, cx, cy, cu);
            predict_intra(mode, nb, cu, pred);
            IntraNeighbors nbu = gather_neighbors(rec_->u.data(), cw, ctile, cx / 2, cy / 2, hcu);
            IntraNeighbors nbv = gather_neighbors(rec_->v.data(), cw, ctile, cx / 2, cy / 2, hcu);
            predict_intra(cmode, nbu, hcu, pred_u);
            predict_intra(cmode, nbv, hcu, pred_v);

            cus_.at(cx, cy) = {true, true, (uint8_t)mode, {}, 0};
        } else {
            MotionVector mv;
            int ref = 0;
            if (r.get_merge_flag()) {
                int mi = r.get_merge_idx();
                auto ml = build_merge_list(cus_, tile, cx, cy, cu);
                mv = ml[(size_t)mi].mv;
                ref = ml[(size_t)mi].ref_idx;
                if (ref >= rn_) ref = 0;  // keyless garble may point past the window
            } else {
                ref = r.get_ref_idx(rn_);
                int mvpi = r.get_mvp_idx();
                MotionVector mvd = r.get_mvd();
                auto mvps = build_mvp_list(cus_, tile, cx, cy);
                mv = {mvps[(size_t)mvpi].x + mvd.x, mvps[(size_t)mvpi].y + mvd.y};
            }
            if (rn_ < 1) throw CorruptStreamError("inter unit without reference frames");
            const RefEntry& re = window_[(size_t)ref];
            mc_block(re.frame.y.data(), W, H, cx, cy, cu, cu, mv.x, mv.y, pred);
            mc_block(re.frame.u.data(), cw, chh, cx / 2, cy / 2, hcu, hcu, mv.x >> 1, mv.y >> 1,
                     pred_u);
            mc_block(re.frame.v.data(), cw, chh, cx / 2, cy / 2, hcu, hcu, mv.x >> 1, mv.y >> 1,
                     pred_v);

            cus_.at(cx, cy) = {true, false, 1, mv, ref};
        }

        int dqp = r.get_dqp(cfg_.max_dqp);
        double qstep = codec_detail::qstep_for(clip3(0, 51, cfg_.qp + dqp));

        int tu = cfg_.tu_size;
        bool unscramble = keyed_ && c_.header.level == Level::Advanced && roi_tile;
        for (int by = 0; by < cu; by += tu)
            for (int bx = 0; bx < cu; bx += tu) {
                std::vector<int32_t> coded = r.get_tu(tu, true);
                if (unscramble)
                    unscramble_tu(coded, derive_chaotic_params(key_, c_.header.nonce,
                                                               (uint32_t)fidx_, tu_counter_));
                tu_counter_++;
                int32_t rr[64];
                reconstruct_block(coded, tu, qstep, rr);
                for (int j = 0; j < tu; j++)
                    for (int i = 0; i < tu; i++)
                        rec_->Y(cx + bx + i, cy + by + j) =
                            clip_pixel((int)pred[(by + j) * cu + bx + i] + rr[j * tu + i]);
            }

        int ctu = tu <= hcu ? tu : hcu;
        for (int plane = 0; plane < 2; plane++) {
            uint8_t* rp = plane == 0 ? rec_->u.data() : rec_->v.data();
            const uint8_t* pp = plane == 0 ? pred_u : pred_v;
            for (int by = 0; by < hcu; by += ctu)
                for (int bx = 0; bx < hcu; bx += ctu) {
                    std::vector<int32_t> levels = r.get_tu(ctu, false);
                    int32_t rr[64];
                    reconstruct_block(levels, ctu, qstep, rr);
                    for (int j = 0; j < ctu; j++)
                        for (int i = 0; i < ctu; i++)
                            rp[(size_t)(cy / 2 + by + j) * cw + cx / 2 + bx + i] = clip_pixel(
                                (int)pp[(by + j) * hcu + bx + i] + rr[j * ctu + i]);
                }
        }
    }

    void fill_gray(const PixelRegion& tr) {
        for (int y = tr.y1; y < tr.y2; y++)
            for (int x = tr.x1; x < tr.x2; x++) rec_->Y(x, y) = 128;
        PixelRegion cr = chroma_region(tr);
        for (int y = cr.y1; y < cr.y2; y++)
            for (int x = cr.x1; x < cr.x2; x++) {
                rec_->U(x, y) = 128;
                rec_->V(x, y) = 128;
            }
    }

    const Container& c_;
    DecodeOptions opt_;
    CodecConfig cfg_;
    VideoSpec spec_;
    StreamKey key_;
    bool keyed_ = false;
    std::optional<ElementCipher> cipher_;
    std::vector<codec_detail::RefEntry> window_;

    Frame* rec_ = nullptr;
    TileClassification cls_;
    codec_detail::CuState cus_;
    char ftype_ = 'I';
    int fidx_ = 0;
    int rn_ = 0;
    uint32_t tu_counter_ = 0;
};

inline EncodeResult encode_sequence(const VideoSequence& src, const EncodeOptions& opt) {
    SequenceEncoder e(opt);
    return e.run(src);
}

inline DecodeResult decode_sequence(const Container& c, const DecodeOptions& opt = {}) {
    SequenceDecoder d(c, opt);
    return d.run();
}

}  // namespace rsel
