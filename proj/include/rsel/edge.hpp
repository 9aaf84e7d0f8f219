#pragma once

// Edge-guided coefficient scrambling: Canny edge maps, logistic-map value
// permutations and the parity flag that tells the decoder which TUs were
// scrambled (the decoder never re-runs edge detection).

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <vector>

#include "rsel/common.hpp"
#include "rsel/keystream.hpp"

namespace rsel {

struct CannyParams {
    double sigma = 1.4;  // 5x5 Gaussian
    double low = 50.0;
    double high = 150.0;
};

// Classic pipeline: 5x5 Gaussian blur, 3x3 Sobel, non-maximum suppression
// along the quantized gradient direction, double threshold, 8-connected
// hysteresis from the strong seeds. Returns a 0/1 map.
inline std::vector<uint8_t> canny(const uint8_t* luma, int w, int h, const CannyParams& p = {}) {
    if (w < 5 || h < 5) throw RangeError("canny: image smaller than the 5x5 kernel");

    // separable Gaussian taps
    double taps[5];
    double tap_sum = 0;
    for (int i = 0; i < 5; i++) {
        double d = i - 2;
        taps[i] = std::exp(-(d * d) / (2.0 * p.sigma * p.sigma));
        tap_sum += taps[i];
    }
    for (double& t : taps) t /= tap_sum;

    auto at = [&](const std::vector<float>& img, int x, int y_) {
        x = clip3(0, w - 1, x);
        y_ = clip3(0, h - 1, y_);
        return img[(size_t)y_ * w + x];
    };

    std::vector<float> tmp((size_t)w * h), smooth((size_t)w * h);
    for (int y_ = 0; y_ < h; y_++)
        for (int x = 0; x < w; x++) {
            double acc = 0;
            for (int i = -2; i <= 2; i++)
                acc += taps[i + 2] * luma[(size_t)y_ * w + clip3(0, w - 1, x + i)];
            tmp[(size_t)y_ * w + x] = (float)acc;
        }
    for (int y_ = 0; y_ < h; y_++)
        for (int x = 0; x < w; x++) {
            double acc = 0;
            for (int i = -2; i <= 2; i++) acc += taps[i + 2] * at(tmp, x, y_ + i);
            smooth[(size_t)y_ * w + x] = (float)acc;
        }

    std::vector<float> mag((size_t)w * h, 0.0f);
    std::vector<uint8_t> dir((size_t)w * h, 0);
    for (int y_ = 0; y_ < h; y_++)
        for (int x = 0; x < w; x++) {
            double gx = at(smooth, x + 1, y_ - 1) + 2 * at(smooth, x + 1, y_) +
                        at(smooth, x + 1, y_ + 1) - at(smooth, x - 1, y_ - 1) -
                        2 * at(smooth, x - 1, y_) - at(smooth, x - 1, y_ + 1);
            double gy = at(smooth, x - 1, y_ + 1) + 2 * at(smooth, x, y_ + 1) +
                        at(smooth, x + 1, y_ + 1) - at(smooth, x - 1, y_ - 1) -
                        2 * at(smooth, x, y_ - 1) - at(smooth, x + 1, y_ - 1);
            mag[(size_t)y_ * w + x] = (float)std::sqrt(gx * gx + gy * gy);
            // sector 0: horizontal-ish gradient, 1: +45deg, 2: vertical, 3: -45deg
            double ang = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
            if (ang < 0) ang += 180.0;
            uint8_t d;
            if (ang < 22.5 || ang >= 157.5)
                d = 0;
            else if (ang < 67.5)
                d = 1;
            else if (ang < 112.5)
                d = 2;
            else
                d = 3;
            dir[(size_t)y_ * w + x] = d;
        }

    // non-maximum suppression; frame border is dropped outright
    std::vector<float> thin((size_t)w * h, 0.0f);
    for (int y_ = 1; y_ < h - 1; y_++)
        for (int x = 1; x < w - 1; x++) {
            size_t i = (size_t)y_ * w + x;
            float m = mag[i];
            float a, b;
            switch (dir[i]) {
                case 0: a = mag[i - 1]; b = mag[i + 1]; break;
                case 1: a = mag[i - w + 1]; b = mag[i + w - 1]; break;
                case 2: a = mag[i - w]; b = mag[i + w]; break;
                default: a = mag[i - w - 1]; b = mag[i + w + 1]; break;
            }
            if (m >= a && m >= b) thin[i] = m;
        }

    std::vector<uint8_t> out((size_t)w * h, 0);
    std::vector<size_t> stack;
    for (size_t i = 0; i < out.size(); i++)
        if (thin[i] >= p.high) {
            out[i] = 1;
            stack.push_back(i);
        }
    while (!stack.empty()) {
        size_t i = stack.back();
        stack.pop_back();
        int x = (int)(i % w), y_ = (int)(i / w);
        for (int dy = -1; dy <= 1; dy++)
            for (int dx = -1; dx <= 1; dx++) {
                int nx = x + dx, ny = y_ + dy;
                if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                size_t j = (size_t)ny * w + nx;
                if (!out[j] && thin[j] >= p.low) {
                    out[j] = 1;
                    stack.push_back(j);
                }
            }
    }
    return out;
}

// A TU is an edge TU iff it contains at least one edge pixel.
inline bool tu_is_edge(const std::vector<uint8_t>& edges, int w, int h, const PixelRegion& tu) {
    PixelRegion r = tu.clipped(w, h);
    for (int y_ = r.y1; y_ < r.y2; y_++)
        for (int x = r.x1; x < r.x2; x++)
            if (edges[(size_t)y_ * w + x]) return true;
    return false;
}

// Logistic-map permutation: burn 100 iterations, collect n values, argsort
// ascending (stable). perm[k] is the destination position of element k.
inline std::vector<int> chaotic_permutation(const ChaoticParams& p, int n) {
    std::vector<int> perm(n < 0 ? 0 : n);
    if (n <= 1) {
        for (int i = 0; i < n; i++) perm[i] = i;
        return perm;
    }
    double x = p.x0;
    for (int i = 0; i < 100; i++) x = p.r * x * (1.0 - x);
    std::vector<double> vals(n);
    for (int i = 0; i < n; i++) {
        x = p.r * x * (1.0 - x);
        vals[i] = x;
    }
    std::vector<int> order(n);
    for (int i = 0; i < n; i++) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return vals[a] < vals[b]; });
    for (int rank = 0; rank < n; rank++) perm[rank] = order[rank];
    return perm;
}

inline std::vector<int32_t> scramble_values(const std::vector<int32_t>& v,
                                            const std::vector<int>& perm) {
    if (v.size() != perm.size()) throw RangeError("scramble_values: size mismatch");
    std::vector<int32_t> out(v.size());
    for (size_t k = 0; k < v.size(); k++) out[(size_t)perm[k]] = v[k];
    return out;
}

inline std::vector<int32_t> unscramble_values(const std::vector<int32_t>& v,
                                              const std::vector<int>& perm) {
    if (v.size() != perm.size()) throw RangeError("unscramble_values: size mismatch");
    std::vector<int32_t> out(v.size());
    for (size_t k = 0; k < v.size(); k++) out[k] = v[(size_t)perm[k]];
    return out;
}

// Parity embedding into a nonzero level: magnitude doubles, sign survives,
// the low bit of the result carries w.
inline int32_t embed_flag(int32_t level, int w) {
    if (level == 0) throw RangeError("embed_flag: zero level");
    if (w != 0 && w != 1) throw RangeError("embed_flag: w must be 0 or 1");
    return level > 0 ? 2 * level - w : 2 * level + w;
}

struct ExtractedFlag {
    int32_t level = 0;
    int w = 0;
};

inline ExtractedFlag extract_flag(int32_t embedded) {
    if (embedded == 0) throw CorruptStreamError("extract_flag: zero last coefficient");
    int w = (int)(std::abs((long long)embedded) % 2);
    int32_t level = embedded > 0 ? (embedded + w) / 2 : (embedded - w) / 2;
    return {level, w};
}

// One TU worth of quantized coefficients in forward scan order. Edge TUs get
// their first N_nz-1 nonzero values permuted; every TU with at least one
// nonzero carries the w flag in its last nonzero level.
inline void scramble_tu(std::vector<int32_t>& coef, const ChaoticParams& p, bool edge_tu) {
    std::vector<size_t> nz;
    for (size_t i = 0; i < coef.size(); i++)
        if (coef[i] != 0) nz.push_back(i);
    if (nz.empty()) return;
    if (edge_tu && nz.size() >= 2) {
        int n = (int)nz.size() - 1;
        std::vector<int32_t> firsts(n);
        for (int i = 0; i < n; i++) firsts[i] = coef[nz[i]];
        firsts = scramble_values(firsts, chaotic_permutation(p, n));
        for (int i = 0; i < n; i++) coef[nz[i]] = firsts[i];
    }
    coef[nz.back()] = embed_flag(coef[nz.back()], edge_tu ? 1 : 0);
}

inline void unscramble_tu(std::vector<int32_t>& coef, const ChaoticParams& p) {
    std::vector<size_t> nz;
    for (size_t i = 0; i < coef.size(); i++)
        if (coef[i] != 0) nz.push_back(i);
    if (nz.empty()) return;
    ExtractedFlag f = extract_flag(coef[nz.back()]);
    coef[nz.back()] = f.level;
    if (f.w == 1 && nz.size() >= 2) {
        int n = (int)nz.size() - 1;
        std::vector<int32_t> firsts(n);
        for (int i = 0; i < n; i++) firsts[i] = coef[nz[i]];
        firsts = unscramble_values(firsts, chaotic_permutation(p, n));
        for (int i = 0; i < n; i++) coef[nz[i]] = firsts[i];
    }
}

}  // namespace rsel
