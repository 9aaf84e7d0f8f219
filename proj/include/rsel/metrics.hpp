#pragma once

// Fineness (IoU) and perturbation indicators, computed strictly over the
// unit-accurate protected region. All scalar metrics are pure functions over
// aggregated sample sets; evaluate_all assembles the per-frame rows and the
// sequence aggregates that the report writers serialize.
//
// Operand convention: the "original" side of the perturbation metrics is the
// unencrypted reconstruction (same codec, identity cipher), so the numbers
// isolate what the cipher did from ordinary coding loss. The source sequence
// only feeds the codec-quality reference column.

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "rsel/common.hpp"
#include "rsel/container.hpp"
#include "rsel/edge.hpp"
#include "rsel/roi.hpp"
#include "rsel/yuv.hpp"

#include <nlohmann/json.hpp>

namespace rsel {

// ---- scalar metrics --------------------------------------------------------

// Intersection-over-union of two same-size 0/1 masks.
inline double iou(const std::vector<uint8_t>& e, const std::vector<uint8_t>& g) {
    if (e.size() != g.size()) throw RangeError("iou: mask sizes differ");
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < e.size(); i++) {
        bool a = e[i] != 0, b = g[i] != 0;
        inter += a && b;
        uni += a || b;
    }
    if (uni == 0) throw RangeError("iou: both masks empty");
    return (double)inter / (double)uni;
}

inline double iou_avg(const std::vector<double>& per_frame) {
    if (per_frame.empty()) throw RangeError("iou_avg: no defined frames");
    double s = 0;
    for (double v : per_frame) s += v;
    return s / (double)per_frame.size();
}

inline double psnr(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    if (a.empty() || a.size() != b.size()) throw RangeError("psnr: bad sample sets");
    double mse = 0;
    for (size_t i = 0; i < a.size(); i++) {
        double d = (double)a[i] - (double)b[i];
        mse += d * d;
    }
    mse /= (double)a.size();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// Global-statistics SSIM: one mean/variance/covariance triple over the whole
// aggregated set (the protected region is an irregular union of units, so
// there is no natural sliding window).
inline double ssim(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    if (a.empty() || a.size() != b.size()) throw RangeError("ssim: bad sample sets");
    double n = (double)a.size();
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); i++) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, cov = 0;
    for (size_t i = 0; i < a.size(); i++) {
        double da = a[i] - ma, db = b[i] - mb;
        va += da * da;
        vb += db * db;
        cov += da * db;
    }
    va /= n;
    vb /= n;
    cov /= n;
    double c1 = (0.01 * 255) * (0.01 * 255);
    double c2 = (0.03 * 255) * (0.03 * 255);
    return ((2 * ma * mb + c1) * (2 * cov + c2)) /
           ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

struct EdrResult {
    double value = 0.0;
    bool no_edges = false;  // neither region produced an edge pixel
};

// Edge difference ratio between two same-size luma regions: the normalized
// disagreement of their edge maps.
inline EdrResult edr(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b, int w, int h,
                     const CannyParams& p = {}) {
    if (w < 5 || h < 5 || a.size() != (size_t)w * h || a.size() != b.size())
        throw RangeError("edr: bad region");
    std::vector<uint8_t> pe = canny(a.data(), w, h, p);
    std::vector<uint8_t> ce = canny(b.data(), w, h, p);
    int64_t num = 0, den = 0;
    for (size_t i = 0; i < pe.size(); i++) {
        num += std::abs((int)pe[i] - (int)ce[i]);
        den += pe[i] + ce[i];
    }
    if (den == 0) return {0.0, true};
    return {(double)num / (double)den, false};
}

inline double entropy(const std::vector<uint8_t>& p) {
    if (p.empty()) throw RangeError("entropy: empty set");
    int64_t hist[256] = {0};
    for (uint8_t v : p) hist[v]++;
    double n = (double)p.size(), h = 0;
    for (int i = 0; i < 256; i++)
        if (hist[i]) {
            double q = hist[i] / n;
            h -= q * std::log2(q);
        }
    return h;
}

inline double npcr(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    if (a.empty() || a.size() != b.size()) throw RangeError("npcr: bad sample sets");
    int64_t diff = 0;
    for (size_t i = 0; i < a.size(); i++) diff += a[i] != b[i];
    return 100.0 * (double)diff / (double)a.size();
}

inline double uaci(const std::vector<uint8_t>& a, const std::vector<uint8_t>& b) {
    if (a.empty() || a.size() != b.size()) throw RangeError("uaci: bad sample sets");
    double s = 0;
    for (size_t i = 0; i < a.size(); i++) s += std::abs((int)a[i] - (int)b[i]);
    return 100.0 * s / (255.0 * (double)a.size());
}

inline double bitrate_change(const Container& ori, const Container& enc) {
    const ContainerHeader &a = ori.header, &b = enc.header;
    if (a.width != b.width || a.height != b.height || a.frame_count != b.frame_count ||
        a.tile_w != b.tile_w || a.tile_h != b.tile_h || a.cu_size != b.cu_size ||
        a.tu_size != b.tu_size || a.qp != b.qp || a.gop_string() != b.gop_string() ||
        a.max_dqp != b.max_dqp || a.max_ref_frames != b.max_ref_frames)
        throw RangeError("bitrate_change: containers differ in coding config");
    double so = (double)ori.payload_bytes(), se = (double)enc.payload_bytes();
    if (so == 0) throw RangeError("bitrate_change: empty reference container");
    return 100.0 * (se - so) / so;
}

// ---- protected-region sample extraction ------------------------------------

struct RoiPixelSets {
    std::vector<uint8_t> ori, enc;
};

namespace metrics_detail {

inline void append_unit(const Frame& f, const PixelRegion& u, std::vector<uint8_t>& out) {
    for (int y = u.y1; y < u.y2; y++)
        for (int x = u.x1; x < u.x2; x++) out.push_back(f.Y(x, y));
    PixelRegion c = chroma_region(u);
    for (int y = c.y1; y < c.y2; y++)
        for (int x = c.x1; x < c.x2; x++) out.push_back(f.U(x, y));
    for (int y = c.y1; y < c.y2; y++)
        for (int x = c.x1; x < c.x2; x++) out.push_back(f.V(x, y));
}

inline PixelRegion units_bbox(const std::vector<PixelRegion>& units) {
    PixelRegion b = units[0];
    for (const PixelRegion& u : units) {
        b.x1 = std::min(b.x1, u.x1);
        b.y1 = std::min(b.y1, u.y1);
        b.x2 = std::max(b.x2, u.x2);
        b.y2 = std::max(b.y2, u.y2);
    }
    return b;
}

inline std::vector<uint8_t> luma_rect(const Frame& f, const PixelRegion& r) {
    std::vector<uint8_t> out;
    out.reserve((size_t)r.width() * r.height());
    for (int y = r.y1; y < r.y2; y++)
        for (int x = r.x1; x < r.x2; x++) out.push_back(f.Y(x, y));
    return out;
}

}  // namespace metrics_detail

// Y,U,V samples of every listed unit, concatenated in unit order, for one
// frame of each sequence.
inline RoiPixelSets extract_roi_pixels(const Frame& ori, const Frame& enc,
                                       const std::vector<PixelRegion>& units) {
    if (ori.width != enc.width || ori.height != enc.height)
        throw RangeError("extract_roi_pixels: frame dims differ");
    RoiPixelSets s;
    for (const PixelRegion& u : units) {
        metrics_detail::append_unit(ori, u, s.ori);
        metrics_detail::append_unit(enc, u, s.enc);
    }
    return s;
}

// ---- sequence evaluation ---------------------------------------------------

struct FrameMetrics {
    int frame = 0;
    bool iou_defined = false;
    double iou = 0.0;
    bool roi_present = false;  // perturbation metrics below defined only if set
    double psnr_db = 0.0;
    double ssim = 0.0;
    double edr = 0.0;
    bool edr_no_edges = false;
    double entropy_bits = 0.0;
    double entropy_ori_bits = 0.0;
    double npcr_pct = 0.0;
    double uaci_pct = 0.0;
    double psnr_source_db = 0.0;  // source vs unencrypted recon (codec quality)
};

struct MetricReport {
    std::vector<FrameMetrics> frames;
    double iou = 0.0;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double edr = 0.0;
    double entropy_bits = 0.0;
    double entropy_ori_bits = 0.0;
    double npcr_pct = 0.0;
    double uaci_pct = 0.0;
    double psnr_source_db = 0.0;
    double bitrate_change_pct = 0.0;
};

struct EvalInputs {
    const VideoSequence* source = nullptr;     // raw input
    const VideoSequence* plain_dec = nullptr;  // decode of the identity container
    const VideoSequence* enc_dec = nullptr;    // decode of the protected container
    const Container* container_ori = nullptr;
    const Container* container_enc = nullptr;
    const RoiMap* roi = nullptr;
    const std::vector<TileClassification>* enc_tiles = nullptr;  // per frame
    const VideoSequence* enc2_dec = nullptr;  // two-ciphertext mode for NPCR/UACI
    CannyParams canny;
    int unit_size = 16;
};

inline MetricReport evaluate_all(const EvalInputs& in) {
    if (!in.source || !in.plain_dec || !in.enc_dec || !in.container_ori || !in.container_enc ||
        !in.roi || !in.enc_tiles)
        throw RangeError("evaluate_all: missing input");
    int W = in.source->spec.width, H = in.source->spec.height;
    size_t n = in.source->frames.size();
    if (in.plain_dec->frames.size() != n || in.enc_dec->frames.size() != n ||
        in.enc_tiles->size() != n || (in.enc2_dec && in.enc2_dec->frames.size() != n))
        throw RangeError("evaluate_all: sequence lengths differ");

    MetricReport rep;
    std::vector<double> ious;
    double s_psnr = 0, s_ssim = 0, s_edr = 0, s_ent = 0, s_ent_o = 0, s_npcr = 0, s_uaci = 0,
           s_psrc = 0;
    int roi_frames = 0;

    for (size_t f = 0; f < n; f++) {
        FrameMetrics fm;
        fm.frame = (int)f;
        const TileClassification& cls = (*in.enc_tiles)[f];

        std::vector<uint8_t> g((size_t)W * H, 0);
        for (const PixelRegion& r : in.roi->regions((int)f)) {
            PixelRegion c = r.clipped(W, H);
            for (int y = c.y1; y < c.y2; y++)
                for (int x = c.x1; x < c.x2; x++) g[(size_t)y * W + x] = 1;
        }
        std::vector<uint8_t> e = pixel_mask(cls);
        bool any_e = false, any_g = false;
        for (uint8_t v : e) any_e |= v != 0;
        for (uint8_t v : g) any_g |= v != 0;
        if (any_e || any_g) {
            fm.iou_defined = true;
            fm.iou = iou(e, g);
            ious.push_back(fm.iou);
        }

        std::vector<PixelRegion> units = roi_unit_set(cls, in.unit_size);
        if (!units.empty()) {
            fm.roi_present = true;
            const Frame& fr_src = in.source->frames[f];
            const Frame& fr_pla = in.plain_dec->frames[f];
            const Frame& fr_enc = in.enc_dec->frames[f];
            RoiPixelSets ps = extract_roi_pixels(fr_pla, fr_enc, units);
            fm.psnr_db = psnr(ps.ori, ps.enc);
            fm.ssim = ssim(ps.ori, ps.enc);
            fm.entropy_bits = entropy(ps.enc);
            fm.entropy_ori_bits = entropy(ps.ori);
            if (in.enc2_dec) {
                RoiPixelSets p2 = extract_roi_pixels(fr_enc, in.enc2_dec->frames[f], units);
                fm.npcr_pct = npcr(p2.ori, p2.enc);
                fm.uaci_pct = uaci(p2.ori, p2.enc);
            } else {
                fm.npcr_pct = npcr(ps.ori, ps.enc);
                fm.uaci_pct = uaci(ps.ori, ps.enc);
            }
            RoiPixelSets pq = extract_roi_pixels(fr_src, fr_pla, units);
            fm.psnr_source_db = psnr(pq.ori, pq.enc);

            PixelRegion bb = metrics_detail::units_bbox(units);
            EdrResult er = edr(metrics_detail::luma_rect(fr_pla, bb),
                               metrics_detail::luma_rect(fr_enc, bb), bb.width(), bb.height(),
                               in.canny);
            fm.edr = er.value;
            fm.edr_no_edges = er.no_edges;

            roi_frames++;
            s_psnr += fm.psnr_db;
            s_ssim += fm.ssim;
            s_edr += fm.edr;
            s_ent += fm.entropy_bits;
            s_ent_o += fm.entropy_ori_bits;
            s_npcr += fm.npcr_pct;
            s_uaci += fm.uaci_pct;
            s_psrc += fm.psnr_source_db;
        }
        rep.frames.push_back(fm);
    }

    rep.iou = iou_avg(ious);
    if (roi_frames == 0) throw RangeError("evaluate_all: no frame has protected units");
    rep.psnr_db = s_psnr / roi_frames;
    rep.ssim = s_ssim / roi_frames;
    rep.edr = s_edr / roi_frames;
    rep.entropy_bits = s_ent / roi_frames;
    rep.entropy_ori_bits = s_ent_o / roi_frames;
    rep.npcr_pct = s_npcr / roi_frames;
    rep.uaci_pct = s_uaci / roi_frames;
    rep.psnr_source_db = s_psrc / roi_frames;
    rep.bitrate_change_pct = bitrate_change(*in.container_ori, *in.container_enc);
    return rep;
}

// ---- report serialization --------------------------------------------------
// Non-finite values (PSNR of identical sets) serialize as null in JSON and
// "inf" in CSV.

inline nlohmann::json report_to_json(const MetricReport& r) {
    nlohmann::json j;
    j["sequence"] = {{"iou", r.iou},
                     {"psnr_db", r.psnr_db},
                     {"ssim", r.ssim},
                     {"edr", r.edr},
                     {"entropy_bits", r.entropy_bits},
                     {"entropy_ori_bits", r.entropy_ori_bits},
                     {"npcr_pct", r.npcr_pct},
                     {"uaci_pct", r.uaci_pct},
                     {"psnr_source_db", r.psnr_source_db},
                     {"bitrate_change_pct", r.bitrate_change_pct}};
    j["frames"] = nlohmann::json::array();
    for (const FrameMetrics& f : r.frames) {
        nlohmann::json e;
        e["frame"] = f.frame;
        e["iou_defined"] = f.iou_defined;
        if (f.iou_defined) e["iou"] = f.iou;
        e["roi_present"] = f.roi_present;
        if (f.roi_present) {
            e["psnr_db"] = f.psnr_db;
            e["ssim"] = f.ssim;
            e["edr"] = f.edr;
            e["edr_no_edges"] = f.edr_no_edges;
            e["entropy_bits"] = f.entropy_bits;
            e["entropy_ori_bits"] = f.entropy_ori_bits;
            e["npcr_pct"] = f.npcr_pct;
            e["uaci_pct"] = f.uaci_pct;
            e["psnr_source_db"] = f.psnr_source_db;
        }
        j["frames"].push_back(e);
    }
    return j;
}

inline void write_report_json(const MetricReport& r, std::ostream& os) {
    os << report_to_json(r).dump(2) << "\n";
}

inline void write_report_csv(const MetricReport& r, std::ostream& os) {
    auto num = [&](double v) -> std::string {
        if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", v);
        return buf;
    };
    os << "frame,iou,psnr_db,ssim,edr,entropy_bits,entropy_ori_bits,npcr_pct,uaci_pct,"
          "psnr_source_db\n";
    for (const FrameMetrics& f : r.frames) {
        os << f.frame << ",";
        os << (f.iou_defined ? num(f.iou) : "") << ",";
        if (f.roi_present)
            os << num(f.psnr_db) << "," << num(f.ssim) << "," << num(f.edr) << ","
               << num(f.entropy_bits) << "," << num(f.entropy_ori_bits) << ","
               << num(f.npcr_pct) << "," << num(f.uaci_pct) << "," << num(f.psnr_source_db);
        else
            os << ",,,,,,,";
        os << "\n";
    }
    os << "sequence," << num(r.iou) << "," << num(r.psnr_db) << "," << num(r.ssim) << ","
       << num(r.edr) << "," << num(r.entropy_bits) << "," << num(r.entropy_ori_bits) << ","
       << num(r.npcr_pct) << "," << num(r.uaci_pct) << "," << num(r.psnr_source_db) << "\n";
    os << "bitrate_change_pct," << num(r.bitrate_change_pct) << "\n";
}

}  // namespace rsel
