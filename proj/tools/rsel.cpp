// Batch driver: encode YUV into protected containers, decode them back,
// evaluate protection quality, and self-check the reversible primitives.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "rsel/codec.hpp"
#include "rsel/container.hpp"
#include "rsel/metrics.hpp"
#include "rsel/roi.hpp"
#include "rsel/selftest.hpp"
#include "rsel/yuv.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

rsel::Level parse_level(const std::string& s) {
    if (s == "none") return rsel::Level::None;
    if (s == "basic") return rsel::Level::Basic;
    if (s == "enhanced") return rsel::Level::Enhanced;
    if (s == "advanced") return rsel::Level::Advanced;
    throw UsageError("unknown level '" + s + "' (none|basic|enhanced|advanced)");
}

// Key material stays out of every log line; only presence is ever printed.
std::optional<rsel::StreamKey> parse_key(const std::string& hex) {
    if (hex.empty()) return std::nullopt;
    try {
        return rsel::StreamKey::from_hex(hex);
    } catch (const rsel::ParseError& e) {
        throw UsageError(e.what());
    }
}

struct EncodeArgs {
    std::string in, out, roi_path, level_str = "none", key_hex;
    int width = 0, height = 0, frames = 0;
    rsel::CodecConfig cfg;
    int tile_size = 0;  // convenience: square tile override
    std::optional<uint64_t> nonce;
};

int cmd_encode(const EncodeArgs& a) {
    rsel::Level level = parse_level(a.level_str);
    std::optional<rsel::StreamKey> key = parse_key(a.key_hex);
    if (level != rsel::Level::None && !key)
        throw UsageError("--level " + a.level_str + " requires a key (--key or RSEL_KEY)");
    if (level == rsel::Level::None && key)
        throw UsageError("a key was given but no --level; pass --level basic|enhanced|advanced");

    rsel::VideoSpec spec{a.width, a.height, a.frames};
    rsel::VideoSequence src = rsel::read_sequence(a.in, spec);

    rsel::EncodeOptions opt;
    opt.cfg = a.cfg;
    if (a.tile_size > 0) {
        opt.cfg.tile_w = a.tile_size;
        opt.cfg.tile_h = a.tile_size;
    }
    opt.level = level;
    if (key) opt.key = &*key;
    opt.nonce = a.nonce;

    rsel::RoiMap roi;
    if (!a.roi_path.empty()) {
        roi = rsel::RoiMap(rsel::parse_roi_file(a.roi_path), src.spec);
        opt.roi = &roi;
    }

    rsel::EncodeResult res = rsel::encode_sequence(src, opt);
    rsel::write_container(a.out, res.container);
    std::cout << "wrote " << a.out << ": " << src.frames.size() << " frames, "
              << res.container.payload_bytes() << " payload bytes, level "
              << level_name(level) << ", nonce " << res.container.header.nonce << "\n";
    return kExitOk;
}

struct DecodeArgs {
    std::string in, out, key_hex;
};

int cmd_decode(const DecodeArgs& a) {
    std::optional<rsel::StreamKey> key = parse_key(a.key_hex);
    rsel::Container c = rsel::read_container(a.in);
    rsel::DecodeOptions opt;
    if (key) opt.key = &*key;
    rsel::DecodeResult res = rsel::decode_sequence(c, opt);
    rsel::write_sequence(a.out, res.video);
    std::cout << "wrote " << a.out << ": " << res.video.frames.size() << " frames, level "
              << level_name(c.header.level) << (key ? ", keyed" : ", keyless") << "\n";
    return kExitOk;
}

struct EvaluateArgs {
    std::string in, plain, enc, enc2, roi_path, report_json, report_csv;
    std::string npcr_mode = "plain-vs-cipher";
    rsel::CannyParams canny;
};

int cmd_evaluate(const EvaluateArgs& a) {
    if (a.npcr_mode != "plain-vs-cipher" && a.npcr_mode != "two-keys")
        throw UsageError("--npcr-mode must be plain-vs-cipher or two-keys");
    if (a.npcr_mode == "two-keys" && a.enc2.empty())
        throw UsageError("--npcr-mode two-keys requires --enc2");
    if (a.roi_path.empty()) throw UsageError("--roi is required for evaluate");

    rsel::Container c_plain = rsel::read_container(a.plain);
    rsel::Container c_enc = rsel::read_container(a.enc);

    rsel::VideoSpec spec{(int)c_enc.header.width, (int)c_enc.header.height,
                         (int)c_enc.header.frame_count};
    rsel::VideoSequence src = rsel::read_sequence(a.in, spec);
    rsel::RoiMap roi(rsel::parse_roi_file(a.roi_path), spec);

    rsel::DecodeResult plain_dec = rsel::decode_sequence(c_plain);
    rsel::DecodeResult enc_dec = rsel::decode_sequence(c_enc);

    rsel::EvalInputs in;
    in.source = &src;
    in.plain_dec = &plain_dec.video;
    in.enc_dec = &enc_dec.video;
    in.container_ori = &c_plain;
    in.container_enc = &c_enc;
    in.roi = &roi;
    in.enc_tiles = &enc_dec.tiles;
    in.canny = a.canny;
    in.unit_size = (int)c_enc.header.cu_size;

    rsel::DecodeResult enc2_dec;
    if (!a.enc2.empty()) {
        rsel::Container c2 = rsel::read_container(a.enc2);
        enc2_dec = rsel::decode_sequence(c2);
        in.enc2_dec = &enc2_dec.video;
    }

    rsel::MetricReport rep = rsel::evaluate_all(in);

    if (!a.report_json.empty()) {
        std::ofstream os(a.report_json);
        if (!os) throw rsel::IoError("cannot open '" + a.report_json + "' for writing");
        rsel::write_report_json(rep, os);
    }
    if (!a.report_csv.empty()) {
        std::ofstream os(a.report_csv);
        if (!os) throw rsel::IoError("cannot open '" + a.report_csv + "' for writing");
        rsel::write_report_csv(rep, os);
    }

    auto row = [](const char* name, double v, const char* unit) {
        std::printf("  %-18s %10.4f %s\n", name, v, unit);
    };
    std::printf("sequence metrics (%s, level %s):\n", a.enc.c_str(),
                level_name(c_enc.header.level));
    row("iou", rep.iou, "");
    row("psnr", rep.psnr_db, "dB");
    row("ssim", rep.ssim, "");
    row("edr", rep.edr, "");
    row("entropy", rep.entropy_bits, "bits");
    row("entropy_ori", rep.entropy_ori_bits, "bits");
    row("npcr", rep.npcr_pct, "%");
    row("uaci", rep.uaci_pct, "%");
    row("psnr_source", rep.psnr_source_db, "dB");
    std::printf("  %-18s %10.2f %%\n", "bitrate_change", rep.bitrate_change_pct);
    return kExitOk;
}

int cmd_selftest() {
    std::vector<rsel::SelfTestCase> cases = rsel::run_selftest();
    bool all = true;
    for (const rsel::SelfTestCase& c : cases) {
        std::printf("  %-28s %s%s%s\n", c.name.c_str(), c.pass ? "pass" : "FAIL",
                    c.pass ? "" : "  ", c.detail.c_str());
        all = all && c.pass;
    }
    std::printf("%zu oracles, %s\n", cases.size(), all ? "all passed" : "FAILURES");
    return all ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tile-based video codec with tunable region-of-interest encryption"};
    app.require_subcommand(1);

    EncodeArgs ea;
    CLI::App* enc = app.add_subcommand("encode", "encode raw YUV 4:2:0 into a container");
    enc->add_option("--in", ea.in, "input .yuv (I420)")->required();
    enc->add_option("--out", ea.out, "output container path")->required();
    enc->add_option("--width", ea.width, "frame width")->required();
    enc->add_option("--height", ea.height, "frame height")->required();
    enc->add_option("--frames", ea.frames, "frame count (0 = all in file)");
    enc->add_option("--qp", ea.cfg.qp, "base quantization parameter (0..51)");
    enc->add_option("--tile-size", ea.tile_size, "square tile size (overrides tile-w/h)");
    enc->add_option("--tile-w", ea.cfg.tile_w, "tile width");
    enc->add_option("--tile-h", ea.cfg.tile_h, "tile height");
    enc->add_option("--cu-size", ea.cfg.cu_size, "coding unit size (16)");
    enc->add_option("--tu-size", ea.cfg.tu_size, "transform unit size (4 or 8)");
    enc->add_option("--gop", ea.cfg.gop, "frame type pattern, e.g. IBBB");
    enc->add_option("--search-range", ea.cfg.search_range, "motion search range (pel)");
    enc->add_option("--max-ref", ea.cfg.max_ref_frames, "reference window size (1..4)");
    enc->add_option("--max-dqp", ea.cfg.max_dqp, "delta-QP cipher range (1..15)");
    enc->add_option("--roi", ea.roi_path, "ROI rectangles file");
    enc->add_option("--level", ea.level_str, "protection level (none|basic|enhanced|advanced)");
    enc->add_option("--key", ea.key_hex, "128-bit key, 32 hex chars")->envname("RSEL_KEY");
    enc->add_option("--nonce", ea.nonce, "stream nonce override (decimal)");
    enc->add_option("--canny-sigma", ea.cfg.canny.sigma, "edge detector blur sigma");
    enc->add_option("--canny-low", ea.cfg.canny.low, "edge detector low threshold");
    enc->add_option("--canny-high", ea.cfg.canny.high, "edge detector high threshold");

    DecodeArgs da;
    CLI::App* dec = app.add_subcommand("decode", "decode a container back to YUV");
    dec->add_option("--in", da.in, "input container")->required();
    dec->add_option("--out", da.out, "output .yuv path")->required();
    dec->add_option("--key", da.key_hex, "128-bit key, 32 hex chars")->envname("RSEL_KEY");

    EvaluateArgs va;
    CLI::App* ev = app.add_subcommand("evaluate", "score a protected container against ground truth");
    ev->add_option("--in", va.in, "source .yuv (I420)")->required();
    ev->add_option("--plain", va.plain, "unprotected container")->required();
    ev->add_option("--enc", va.enc, "protected container")->required();
    ev->add_option("--enc2", va.enc2, "second protected container (two-keys mode)");
    ev->add_option("--roi", va.roi_path, "ROI ground-truth rectangles file");
    ev->add_option("--report-json", va.report_json, "write JSON report here");
    ev->add_option("--report-csv", va.report_csv, "write per-frame CSV here");
    ev->add_option("--npcr-mode", va.npcr_mode, "plain-vs-cipher (default) or two-keys");
    ev->add_option("--canny-sigma", va.canny.sigma, "edge detector blur sigma");
    ev->add_option("--canny-low", va.canny.low, "edge detector low threshold");
    ev->add_option("--canny-high", va.canny.high, "edge detector high threshold");

    CLI::App* st = app.add_subcommand("selftest", "run the inversion oracle battery");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (enc->parsed()) return cmd_encode(ea);
        if (dec->parsed()) return cmd_decode(da);
        if (ev->parsed()) return cmd_evaluate(va);
        if (st->parsed()) return cmd_selftest();
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
