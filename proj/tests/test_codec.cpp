#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <set>

#include "rsel/codec.hpp"

using namespace rsel;
using codec_detail::IntraNeighbors;

namespace {

VideoSequence flat_clip(int w, int h, int n, uint8_t v) {
    VideoSequence s;
    s.spec = VideoSpec{w, h, n};
    for (int i = 0; i < n; i++) {
        Frame f(w, h);
        std::fill(f.y.begin(), f.y.end(), v);
        std::fill(f.u.begin(), f.u.end(), v);
        std::fill(f.v.begin(), f.v.end(), v);
        s.frames.push_back(std::move(f));
    }
    return s;
}

// Textured static background with an optional moving textured square; mild
// per-frame noise keeps the coefficient stream busy without drowning psnr.
VideoSequence textured_clip(int w, int h, int n, uint32_t seed, int square_step = 0) {
    std::mt19937 rng(seed);
    Frame bg(w, h);
    for (int y = 0; y < h; y++)
        for (int x = 0; x < w; x++)
            bg.Y(x, y) = (uint8_t)clip3(0, 255, 40 + (x * 3) % 120 + ((y * 5) % 60) +
                                                      (int)(rng() % 17) - 8);
    for (int y = 0; y < bg.ch(); y++)
        for (int x = 0; x < bg.cw(); x++) {
            bg.U(x, y) = (uint8_t)(100 + (x * 7 + y * 3) % 56);
            bg.V(x, y) = (uint8_t)(90 + (x * 2 + y * 9) % 72);
        }

    VideoSequence s;
    s.spec = VideoSpec{w, h, n};
    for (int i = 0; i < n; i++) {
        Frame f = bg;
        if (square_step) {
            int sq = std::min(w, h) / 3;
            int ox = (4 + i * square_step) % std::max(1, w - sq);
            int oy = (4 + i * square_step / 2) % std::max(1, h - sq);
            for (int y = 0; y < sq; y++)
                for (int x = 0; x < sq; x++) {
                    f.Y(ox + x, oy + y) =
                        (uint8_t)clip3(0, 255, 200 - (x * 11 + y * 13) % 160);
                    if (!((ox + x) & 1) && !((oy + y) & 1)) {
                        f.U((ox + x) / 2, (oy + y) / 2) = (uint8_t)(60 + (x + y) % 90);
                        f.V((ox + x) / 2, (oy + y) / 2) = (uint8_t)(160 - (x * 3) % 80);
                    }
                }
        }
        s.frames.push_back(std::move(f));
    }
    return s;
}

CodecConfig small_cfg() {
    CodecConfig c;
    c.qp = 24;
    c.tile_w = 32;
    c.tile_h = 32;
    return c;
}

StreamKey test_key(int i) {
    std::array<uint8_t, 16> b{};
    for (int j = 0; j < 16; j++) b[(size_t)j] = (uint8_t)(i * 31 + j * 7 + 1);
    StreamKey k;
    k.bytes = b;
    return k;
}

// Frame payload starts with the tile bitmap; the coded chunks follow.
std::vector<uint8_t> chunks_only(const std::vector<uint8_t>& payload, int tile_count) {
    size_t skip = (size_t)ceil_div(tile_count, 8);
    return std::vector<uint8_t>(payload.begin() + (long)skip, payload.end());
}

double luma_mad(const Frame& a, const Frame& b, const PixelRegion& r) {
    double s = 0;
    for (int y = r.y1; y < r.y2; y++)
        for (int x = r.x1; x < r.x2; x++) s += std::abs((int)a.Y(x, y) - (int)b.Y(x, y));
    return s / r.area();
}

}  // namespace

TEST_CASE("forward transform matches the textbook dct-ii formula") {
    std::mt19937 rng(17);
    const double pi = std::acos(-1.0);
    for (int n : {4, 8}) {
        for (int trial = 0; trial < 20; trial++) {
            std::vector<int32_t> r((size_t)n * n);
            for (auto& v : r) v = (int32_t)(rng() % 511) - 255;
            double got[64];
            codec_detail::fwd_dct2(r.data(), n, got);
            for (int u = 0; u < n; u++)
                for (int v = 0; v < n; v++) {
                    double au = u == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
                    double av = v == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
                    double s = 0;
                    for (int x = 0; x < n; x++)
                        for (int y = 0; y < n; y++)
                            s += r[(size_t)x * n + y] * std::cos((2 * x + 1) * u * pi / (2 * n)) *
                                 std::cos((2 * y + 1) * v * pi / (2 * n));
                    REQUIRE(got[u * n + v] == Catch::Approx(au * av * s).margin(1e-9));
                }
        }
    }
}

TEST_CASE("transform pair is orthonormal") {
    std::mt19937 rng(18);
    for (int n : {4, 8}) {
        std::vector<int32_t> r((size_t)n * n);
        for (auto& v : r) v = (int32_t)(rng() % 511) - 255;
        double c[64], back[64];
        codec_detail::fwd_dct2(r.data(), n, c);
        codec_detail::inv_dct2(c, n, back);
        double energy_r = 0, energy_c = 0;
        for (int i = 0; i < n * n; i++) {
            REQUIRE(back[i] == Catch::Approx((double)r[(size_t)i]).margin(1e-9));
            energy_r += (double)r[(size_t)i] * r[(size_t)i];
            energy_c += c[i] * c[i];
        }
        CHECK(energy_c == Catch::Approx(energy_r).epsilon(1e-12));
    }
}

TEST_CASE("unit quantizer keeps the block nearly intact") {
    std::mt19937 rng(19);
    double qstep = codec_detail::qstep_for(4);
    CHECK(qstep == Catch::Approx(1.0));
    CHECK(codec_detail::qstep_for(10) == Catch::Approx(2.0));
    CHECK(codec_detail::qstep_for(28) == Catch::Approx(16.0));
    for (int n : {4, 8})
        for (int trial = 0; trial < 200; trial++) {
            std::vector<int32_t> r((size_t)n * n);
            for (auto& v : r) v = (int32_t)(rng() % 511) - 255;
            std::vector<int32_t> levels = codec_detail::quantize_block(r.data(), n, qstep);
            std::vector<int32_t> back((size_t)n * n);
            codec_detail::reconstruct_block(levels, n, qstep, back.data());
            for (int i = 0; i < n * n; i++)
                REQUIRE(std::abs(back[(size_t)i] - r[(size_t)i]) <= 3);
        }
}

TEST_CASE("diagonal scan visits every position once, anti-diagonal order") {
    for (int n : {4, 8}) {
        const std::vector<int>& s = codec_detail::diag_scan(n);
        REQUIRE((int)s.size() == n * n);
        std::vector<uint8_t> seen((size_t)n * n, 0);
        int prev_d = 0;
        for (int idx : s) {
            REQUIRE(!seen[(size_t)idx]);
            seen[(size_t)idx] = 1;
            int d = idx / n + idx % n;
            REQUIRE(d >= prev_d);
            prev_d = d;
        }
    }
    CHECK(codec_detail::diag_scan(4)[0] == 0);
    CHECK(codec_detail::diag_scan(4)[1] == 4);  // down-left start, walking up-right
    CHECK(codec_detail::diag_scan(4)[2] == 1);
}

TEST_CASE("intra prediction fixed patterns") {
    const int n = 8;
    // 32x32 plane with recognizable row/column structure around (16,16).
    std::vector<uint8_t> plane((size_t)32 * 32);
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++) plane[(size_t)y * 32 + x] = (uint8_t)(x * 5 + y * 3);
    PixelRegion tile{0, 0, 32, 32};
    IntraNeighbors nb = codec_detail::gather_neighbors(plane.data(), 32, tile, 16, 16, n);

    uint8_t dst[64];
    // Vertical replication of the row above.
    codec_detail::predict_intra(26, nb, n, dst);
    for (int y = 0; y < n; y++)
        for (int x = 0; x < n; x++) REQUIRE(dst[y * n + x] == plane[(size_t)15 * 32 + 16 + x]);
    // Horizontal replication of the column to the left.
    codec_detail::predict_intra(10, nb, n, dst);
    for (int y = 0; y < n; y++)
        for (int x = 0; x < n; x++) REQUIRE(dst[y * n + x] == plane[(size_t)(16 + y) * 32 + 15]);

    // DC averages the immediate left column and top row.
    int s = n;
    for (int i = 0; i < n; i++)
        s += plane[(size_t)(16 + i) * 32 + 15] + plane[(size_t)15 * 32 + 16 + i];
    codec_detail::predict_intra(1, nb, n, dst);
    for (int i = 0; i < n * n; i++) REQUIRE(dst[i] == (uint8_t)(s / (2 * n)));

    // Planar interpolates between the four edges.
    codec_detail::predict_intra(0, nb, n, dst);
    for (int y = 0; y < n; y++)
        for (int x = 0; x < n; x++) {
            int v = (n - 1 - x) * nb.left[(size_t)y] + (x + 1) * nb.top[(size_t)n] +
                    (n - 1 - y) * nb.top[(size_t)x] + (y + 1) * nb.left[(size_t)n] + n;
            REQUIRE(dst[y * n + x] == (uint8_t)(v >> 4));
        }
}

TEST_CASE("all predictions fall back to mid-gray without neighbors") {
    std::vector<uint8_t> plane((size_t)32 * 32, 77);
    PixelRegion tile{0, 0, 32, 32};
    IntraNeighbors nb = codec_detail::gather_neighbors(plane.data(), 32, tile, 0, 0, 8);
    uint8_t dst[64];
    for (int mode = 0; mode < 35; mode++) {
        codec_detail::predict_intra(mode, nb, 8, dst);
        for (int i = 0; i < 64; i++) REQUIRE(dst[i] == 128);
    }
}

TEST_CASE("neighbor gathering respects the tile boundary") {
    std::vector<uint8_t> plane((size_t)64 * 32);
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 64; x++) plane[(size_t)y * 64 + x] = (uint8_t)(2 * x + y);
    // Block at the left edge of the right tile: the left column exists in the
    // frame but belongs to the other tile, so it must not be read.
    PixelRegion right_tile{32, 0, 64, 32};
    IntraNeighbors nb = codec_detail::gather_neighbors(plane.data(), 64, right_tile, 32, 16, 8);
    // Top row is available (inside the tile); the left column and corner back-
    // fill from the first available sample, which is the top-left top entry,
    // never from column 31 of the other tile.
    for (int i = 0; i < 16; i++) REQUIRE(nb.top[(size_t)i] == plane[(size_t)15 * 64 + 32 + i]);
    uint8_t fill = plane[(size_t)15 * 64 + 32];
    REQUIRE(nb.corner == fill);
    for (size_t j = 0; j < nb.left.size(); j++) REQUIRE(nb.left[j] == fill);
    REQUIRE(fill != plane[(size_t)16 * 64 + 31]);

    // Top-right availability stops at the tile edge: a block touching the
    // right edge extends its top row with the last in-tile sample.
    IntraNeighbors edge = codec_detail::gather_neighbors(plane.data(), 64, right_tile, 56, 16, 8);
    for (int i = 0; i < 8; i++) REQUIRE(edge.top[(size_t)i] == plane[(size_t)15 * 64 + 56 + i]);
    for (int i = 8; i < 16; i++) REQUIRE(edge.top[(size_t)i] == plane[(size_t)15 * 64 + 63]);
}

TEST_CASE("mpm list construction") {
    using codec_detail::build_mpm_list;
    CHECK(build_mpm_list(-1, -1) == std::array<int, 3>{0, 1, 26});
    CHECK(build_mpm_list(5, 17) == std::array<int, 3>{5, 17, 0});
    CHECK(build_mpm_list(0, 0) == std::array<int, 3>{0, 1, 26});
    CHECK(build_mpm_list(1, 1) == std::array<int, 3>{0, 1, 26});
    CHECK(build_mpm_list(20, 20) == std::array<int, 3>{20, 19, 21});
    CHECK(build_mpm_list(2, 2) == std::array<int, 3>{2, 33, 3});
    CHECK(build_mpm_list(34, 34) == std::array<int, 3>{34, 33, 3});
    CHECK(build_mpm_list(0, 1) == std::array<int, 3>{0, 1, 26});
    CHECK(build_mpm_list(26, 1) == std::array<int, 3>{26, 1, 0});
    // All three entries always distinct and in range.
    for (int l = -1; l < 35; l++)
        for (int a = -1; a < 35; a++) {
            std::array<int, 3> m = build_mpm_list(l, a);
            REQUIRE(m[0] != m[1]);
            REQUIRE(m[0] != m[2]);
            REQUIRE(m[1] != m[2]);
            for (int v : m) {
                REQUIRE(v >= 0);
                REQUIRE(v < 35);
            }
        }
}

TEST_CASE("chroma mode list substitutes the duplicate") {
    using codec_detail::chroma_mode_from_idx;
    CHECK(chroma_mode_from_idx(7, 0) == 7);    // derived
    CHECK(chroma_mode_from_idx(7, 1) == 0);
    CHECK(chroma_mode_from_idx(7, 2) == 26);
    CHECK(chroma_mode_from_idx(7, 3) == 10);
    CHECK(chroma_mode_from_idx(7, 4) == 1);
    CHECK(chroma_mode_from_idx(26, 2) == 34);  // duplicate replaced
    CHECK(chroma_mode_from_idx(0, 1) == 34);
    CHECK(chroma_mode_from_idx(10, 3) == 34);
    CHECK(chroma_mode_from_idx(1, 4) == 34);
}

TEST_CASE("motion compensation clamps at the frame border") {
    std::vector<uint8_t> plane((size_t)16 * 16);
    for (int y = 0; y < 16; y++)
        for (int x = 0; x < 16; x++) plane[(size_t)y * 16 + x] = (uint8_t)(y * 16 + x);
    uint8_t dst[16];
    codec_detail::mc_block(plane.data(), 16, 16, 0, 0, 4, 4, 2, 1, dst);
    for (int j = 0; j < 4; j++)
        for (int i = 0; i < 4; i++) {
            int sx = clip3(0, 15, i - 2);
            int sy = clip3(0, 15, j - 1);
            REQUIRE(dst[j * 4 + i] == plane[(size_t)sy * 16 + sx]);
        }
}

TEST_CASE("per-unit delta qp is deterministic and small") {
    for (int f = 0; f < 4; f++)
        for (int cx = 0; cx < 64; cx += 16)
            for (int cy = 0; cy < 64; cy += 16) {
                int d = codec_detail::position_dqp(f, cx, cy, 12);
                CHECK(d >= -2);
                CHECK(d <= 2);
                CHECK(codec_detail::position_dqp(f, cx, cy, 12) == d);
                CHECK(codec_detail::position_dqp(f, cx, cy, 1) >= -1);
                CHECK(codec_detail::position_dqp(f, cx, cy, 1) <= 1);
            }
    // Not constant across positions.
    std::set<int> vals;
    for (int cx = 0; cx < 256; cx += 16) vals.insert(codec_detail::position_dqp(0, cx, 0, 12));
    CHECK(vals.size() > 1);
}

TEST_CASE("config validation") {
    CodecConfig c;
    CHECK_NOTHROW(c.validate());
    auto bad = [](auto&& mutate) {
        CodecConfig c2;
        mutate(c2);
        CHECK_THROWS_AS(c2.validate(), RangeError);
    };
    bad([](CodecConfig& c2) { c2.qp = 52; });
    bad([](CodecConfig& c2) { c2.qp = -1; });
    bad([](CodecConfig& c2) { c2.cu_size = 8; });
    bad([](CodecConfig& c2) { c2.tu_size = 5; });
    bad([](CodecConfig& c2) { c2.tile_w = 24; });
    bad([](CodecConfig& c2) { c2.tile_h = 0; });
    bad([](CodecConfig& c2) { c2.gop = "PBB"; });
    bad([](CodecConfig& c2) { c2.gop = "IXB"; });
    bad([](CodecConfig& c2) { c2.gop = ""; });
    bad([](CodecConfig& c2) { c2.gop = "IBBBBBBBB"; });
    bad([](CodecConfig& c2) { c2.search_range = 0; });
    bad([](CodecConfig& c2) { c2.max_ref_frames = 5; });
    bad([](CodecConfig& c2) { c2.max_dqp = 0; });
    bad([](CodecConfig& c2) { c2.max_dqp = 16; });
}

TEST_CASE("encode input validation") {
    VideoSequence s = flat_clip(20, 16, 1, 128);
    EncodeOptions opt;
    opt.cfg = small_cfg();
    CHECK_THROWS_AS(encode_sequence(s, opt), RangeError);  // width not a cu multiple

    VideoSequence ok = flat_clip(32, 32, 2, 128);
    EncodeOptions lvl;
    lvl.cfg = small_cfg();
    lvl.level = Level::Basic;
    CHECK_THROWS_AS(encode_sequence(ok, lvl), RangeError);  // level without key

    StreamKey k = test_key(1);
    EncodeOptions keyed;
    keyed.cfg = small_cfg();
    keyed.key = &k;
    CHECK_THROWS_AS(encode_sequence(ok, keyed), RangeError);  // key without level
}

TEST_CASE("flat input reconstructs exactly and compresses to almost nothing") {
    VideoSequence s = flat_clip(64, 64, 4, 128);
    EncodeOptions opt;
    opt.cfg = small_cfg();
    EncodeResult r = encode_sequence(s, opt);
    for (int f = 0; f < 4; f++) REQUIRE(r.recon.frames[(size_t)f] == s.frames[(size_t)f]);
    CHECK(r.container.payload_bytes() < 600);

    DecodeResult d = decode_sequence(r.container);
    REQUIRE(d.video.frames.size() == 4);
    for (int f = 0; f < 4; f++) REQUIRE(d.video.frames[(size_t)f] == s.frames[(size_t)f]);
}

TEST_CASE("decode reproduces the encoder reconstruction bit-exactly") {
    for (int tu : {4, 8}) {
        CodecConfig cfg = small_cfg();
        cfg.tu_size = tu;
        cfg.gop = "IPBB";
        cfg.max_ref_frames = 3;
        VideoSequence s = textured_clip(64, 48, 6, 1000u + (uint32_t)tu, 3);
        EncodeOptions opt;
        opt.cfg = cfg;
        EncodeResult r = encode_sequence(s, opt);
        DecodeResult d = decode_sequence(r.container);
        REQUIRE(d.video.frames.size() == s.frames.size());
        for (size_t f = 0; f < s.frames.size(); f++)
            REQUIRE(d.video.frames[f] == r.recon.frames[f]);
        REQUIRE(d.tiles.size() == r.tiles.size());
        for (size_t f = 0; f < d.tiles.size(); f++) REQUIRE(d.tiles[f].roi == r.tiles[f].roi);
    }
}

TEST_CASE("encoding is deterministic") {
    VideoSequence s = textured_clip(64, 64, 4, 5, 2);
    EncodeOptions opt;
    opt.cfg = small_cfg();
    EncodeResult a = encode_sequence(s, opt);
    EncodeResult b = encode_sequence(s, opt);
    CHECK(a.container.frame_payloads == b.container.frame_payloads);

    StreamKey k = test_key(2);
    RoiMap roi({{0, 0, {0, 0, 32, 32}}, {1, 0, {0, 0, 32, 32}}, {2, 0, {0, 0, 32, 32}},
                {3, 0, {0, 0, 32, 32}}},
               s.spec);
    EncodeOptions e;
    e.cfg = small_cfg();
    e.roi = &roi;
    e.level = Level::Advanced;
    e.key = &k;
    EncodeResult c1 = encode_sequence(s, e);
    EncodeResult c2 = encode_sequence(s, e);
    CHECK(c1.container.frame_payloads == c2.container.frame_payloads);
    CHECK(c1.container.header.nonce == c2.container.header.nonce);

    // Explicit nonce overrides the derived one and changes the stream.
    e.nonce = c1.container.header.nonce ^ 1;
    EncodeResult c3 = encode_sequence(s, e);
    CHECK(c3.container.header.nonce != c1.container.header.nonce);
    CHECK(c3.container.frame_payloads != c1.container.frame_payloads);
}

TEST_CASE("content-derived nonce reacts to key and pixels") {
    VideoSequence a = textured_clip(32, 32, 2, 6, 0);
    VideoSequence b = a;
    b.frames[1].y[0] ^= 1;
    StreamKey k1 = test_key(3), k2 = test_key(4);
    CHECK(derive_nonce(k1, a) == derive_nonce(k1, a));
    CHECK(derive_nonce(k1, a) != derive_nonce(k1, b));
    CHECK(derive_nonce(k1, a) != derive_nonce(k2, a));
}

TEST_CASE("inter frames exploit the reference window") {
    VideoSequence s = textured_clip(64, 64, 4, 7, 0);  // static scene
    EncodeOptions opt;
    opt.cfg = small_cfg();
    EncodeResult r = encode_sequence(s, opt);
    size_t ibytes = r.container.frame_payloads[0].size();
    for (int f = 1; f < 4; f++) CHECK(r.container.frame_payloads[(size_t)f].size() < ibytes / 3);

    // A pure global shift is also cheap: full-search finds the displacement.
    VideoSequence shifted;
    shifted.spec = VideoSpec{64, 64, 2};
    shifted.frames.push_back(s.frames[0]);
    Frame f1(64, 64);
    for (int y = 0; y < 64; y++)
        for (int x = 0; x < 64; x++) f1.Y(x, y) = s.frames[0].Y(std::max(0, x - 2), y);
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++) {
            f1.U(x, y) = s.frames[0].U(std::max(0, x - 1), y);
            f1.V(x, y) = s.frames[0].V(std::max(0, x - 1), y);
        }
    shifted.frames.push_back(f1);
    EncodeResult r2 = encode_sequence(shifted, opt);
    CHECK(r2.container.frame_payloads[1].size() < r2.container.frame_payloads[0].size() / 2);
}

TEST_CASE("element order is identical on both ends") {
    VideoSequence s = textured_clip(64, 64, 4, 8, 2);
    RoiMap roi({{0, 0, {8, 8, 40, 40}}, {1, 0, {8, 8, 40, 40}}, {2, 0, {8, 8, 40, 40}},
                {3, 0, {8, 8, 40, 40}}},
               s.spec);
    StreamKey k = test_key(5);

    for (Level lvl : {Level::None, Level::Basic, Level::Enhanced, Level::Advanced}) {
        std::vector<ElemKind> enc_elems, dec_elems;
        std::vector<DrawRecord> enc_draws, dec_draws;
        EncodeOptions opt;
        opt.cfg = small_cfg();
        opt.roi = &roi;
        opt.level = lvl;
        opt.key = lvl == Level::None ? nullptr : &k;
        opt.elem_trace = &enc_elems;
        opt.draw_trace = &enc_draws;
        EncodeResult r = encode_sequence(s, opt);

        DecodeOptions dopt;
        dopt.key = lvl == Level::None ? nullptr : &k;
        dopt.elem_trace = &dec_elems;
        dopt.draw_trace = &dec_draws;
        DecodeResult d = decode_sequence(r.container, dopt);

        REQUIRE(enc_elems == dec_elems);
        REQUIRE(enc_draws.size() == dec_draws.size());
        for (size_t i = 0; i < enc_draws.size(); i++) {
            REQUIRE(enc_draws[i].kind == dec_draws[i].kind);
            REQUIRE(enc_draws[i].width == dec_draws[i].width);
        }
        if (lvl == Level::None) CHECK(enc_draws.empty());
        for (size_t f = 0; f < s.frames.size(); f++)
            REQUIRE(d.video.frames[f] == r.recon.frames[f]);
    }
}

TEST_CASE("keyed decode equals the identity decode at every level") {
    VideoSequence s = textured_clip(64, 64, 5, 9, 3);
    RoiMap roi({{0, 0, {4, 4, 44, 44}}, {1, 0, {4, 4, 44, 44}}, {2, 0, {4, 4, 44, 44}},
                {3, 0, {4, 4, 44, 44}}, {4, 0, {4, 4, 44, 44}}},
               s.spec);

    EncodeOptions plain;
    plain.cfg = small_cfg();
    plain.roi = &roi;
    VideoSequence ref = decode_sequence(encode_sequence(s, plain).container).video;

    for (Level lvl : {Level::Basic, Level::Enhanced, Level::Advanced}) {
        for (int ki = 0; ki < 3; ki++) {
            StreamKey k = test_key(10 + ki);
            EncodeOptions opt;
            opt.cfg = small_cfg();
            opt.roi = &roi;
            opt.level = lvl;
            opt.key = &k;
            EncodeResult r = encode_sequence(s, opt);
            CHECK(r.container.header.level == lvl);

            DecodeOptions dopt;
            dopt.key = &k;
            DecodeResult d = decode_sequence(r.container, dopt);
            for (size_t f = 0; f < s.frames.size(); f++)
                REQUIRE(d.video.frames[f] == ref.frames[f]);
        }
    }
}

TEST_CASE("basic level leaves the payload size untouched") {
    VideoSequence s = textured_clip(64, 64, 5, 10, 2);
    RoiMap roi({{0, 0, {0, 0, 64, 64}}, {1, 0, {0, 0, 64, 64}}, {2, 0, {0, 0, 64, 64}},
                {3, 0, {0, 0, 64, 64}}, {4, 0, {0, 0, 64, 64}}},
               s.spec);
    EncodeOptions plain;
    plain.cfg = small_cfg();
    plain.roi = &roi;
    EncodeResult p = encode_sequence(s, plain);

    StreamKey k = test_key(20);
    EncodeOptions basic = plain;
    basic.level = Level::Basic;
    basic.key = &k;
    EncodeResult b = encode_sequence(s, basic);

    REQUIRE(b.container.frame_payloads.size() == p.container.frame_payloads.size());
    for (size_t f = 0; f < b.container.frame_payloads.size(); f++)
        REQUIRE(b.container.frame_payloads[f].size() == p.container.frame_payloads[f].size());
    // The cipher did change the stream content.
    CHECK(b.container.frame_payloads != p.container.frame_payloads);
}

TEST_CASE("classification drives nothing when the cipher is identity") {
    // With the identity cipher the coded tile chunks cannot depend on the roi
    // classification; only the bitmap prefix differs.
    VideoSequence s = textured_clip(64, 64, 4, 11, 2);
    RoiMap all({{0, 0, {0, 0, 64, 64}}, {1, 0, {0, 0, 64, 64}}, {2, 0, {0, 0, 64, 64}},
                {3, 0, {0, 0, 64, 64}}},
               s.spec);
    EncodeOptions with_roi;
    with_roi.cfg = small_cfg();
    with_roi.roi = &all;
    EncodeOptions no_roi;
    no_roi.cfg = small_cfg();
    EncodeResult a = encode_sequence(s, with_roi);
    EncodeResult b = encode_sequence(s, no_roi);
    REQUIRE(a.container.frame_payloads.size() == b.container.frame_payloads.size());
    int tiles = TileGrid{64, 64, 32, 32}.count();
    for (size_t f = 0; f < a.container.frame_payloads.size(); f++) {
        REQUIRE(a.container.frame_payloads[f] != b.container.frame_payloads[f]);  // bitmap
        REQUIRE(chunks_only(a.container.frame_payloads[f], tiles) ==
                chunks_only(b.container.frame_payloads[f], tiles));
    }
}

TEST_CASE("keyless decode garbles roi tiles and nothing else") {
    VideoSequence s = textured_clip(96, 64, 5, 12, 3);
    std::vector<RoiRecord> recs;
    for (int f = 0; f < 5; f++) recs.push_back({f, 0, {34, 2, 62, 30}});  // inside tile (1,0)
    RoiMap roi(recs, s.spec);

    EncodeOptions plain;
    plain.cfg = small_cfg();
    plain.roi = &roi;
    VideoSequence ref = decode_sequence(encode_sequence(s, plain).container).video;

    StreamKey k = test_key(30);
    for (Level lvl : {Level::Basic, Level::Enhanced, Level::Advanced}) {
        EncodeOptions opt = plain;
        opt.level = lvl;
        opt.key = &k;
        EncodeResult r = encode_sequence(s, opt);
        DecodeResult d = decode_sequence(r.container);  // no key

        double roi_mad = 0;
        for (size_t f = 0; f < s.frames.size(); f++) {
            const TileClassification& cls = d.tiles[f];
            REQUIRE(cls.is_roi(1, 0));
            for (int ty = 0; ty < cls.grid.rows(); ty++)
                for (int tx = 0; tx < cls.grid.cols(); tx++) {
                    PixelRegion tr = cls.grid.tile_rect(tx, ty);
                    if (!cls.is_roi(tx, ty)) {
                        // Outside the roi tiles: exact match, all planes.
                        for (int y = tr.y1; y < tr.y2; y++)
                            for (int x = tr.x1; x < tr.x2; x++)
                                REQUIRE(d.video.frames[f].Y(x, y) == ref.frames[f].Y(x, y));
                        PixelRegion cr = chroma_region(tr);
                        for (int y = cr.y1; y < cr.y2; y++)
                            for (int x = cr.x1; x < cr.x2; x++) {
                                REQUIRE(d.video.frames[f].U(x, y) == ref.frames[f].U(x, y));
                                REQUIRE(d.video.frames[f].V(x, y) == ref.frames[f].V(x, y));
                            }
                    } else {
                        roi_mad += luma_mad(d.video.frames[f], ref.frames[f], tr);
                    }
                }
        }
        roi_mad /= (double)s.frames.size();
        if (lvl != Level::Basic) CHECK(roi_mad > 8.0);
        CHECK(roi_mad > 0.5);  // even basic flips signs and magnitudes
    }
}

TEST_CASE("wrong key garbles, right key restores") {
    VideoSequence s = textured_clip(64, 64, 4, 13, 2);
    std::vector<RoiRecord> recs;
    for (int f = 0; f < 4; f++) recs.push_back({f, 0, {0, 0, 64, 64}});
    RoiMap roi(recs, s.spec);

    EncodeOptions plain;
    plain.cfg = small_cfg();
    plain.roi = &roi;
    VideoSequence ref = decode_sequence(encode_sequence(s, plain).container).video;

    StreamKey good = test_key(40), bad = test_key(41);
    EncodeOptions opt = plain;
    opt.level = Level::Enhanced;
    opt.key = &good;
    EncodeResult r = encode_sequence(s, opt);

    DecodeOptions with_bad;
    with_bad.key = &bad;
    DecodeResult db = decode_sequence(r.container, with_bad);
    double mad = 0;
    for (size_t f = 0; f < s.frames.size(); f++)
        mad += luma_mad(db.video.frames[f], ref.frames[f], {0, 0, 64, 64});
    CHECK(mad / (double)s.frames.size() > 8.0);

    DecodeOptions with_good;
    with_good.key = &good;
    DecodeResult dg = decode_sequence(r.container, with_good);
    for (size_t f = 0; f < s.frames.size(); f++) REQUIRE(dg.video.frames[f] == ref.frames[f]);
}

TEST_CASE("psnr of the plain reconstruction is reasonable") {
    VideoSequence s = textured_clip(64, 64, 8, 14, 2);
    CodecConfig cfg = small_cfg();
    EncodeOptions opt;
    opt.cfg = cfg;
    EncodeResult r = encode_sequence(s, opt);
    double mse = 0;
    size_t cnt = 0;
    for (size_t f = 0; f < s.frames.size(); f++)
        for (size_t i = 0; i < s.frames[f].y.size(); i++) {
            double dd = (double)s.frames[f].y[i] - (double)r.recon.frames[f].y[i];
            mse += dd * dd;
            cnt++;
        }
    mse /= (double)cnt;
    double psnr = 10.0 * std::log10(255.0 * 255.0 / mse);
    CHECK(psnr > 30.0);
}

TEST_CASE("corrupt tile chunk grays the tile and spares the rest") {
    VideoSequence s = textured_clip(64, 64, 3, 15, 0);
    CodecConfig cfg = small_cfg();
    cfg.gop = "I";  // intra-only: later frames must stay exact
    EncodeOptions opt;
    opt.cfg = cfg;
    EncodeResult r = encode_sequence(s, opt);
    VideoSequence ref = decode_sequence(r.container).video;

    // Frame payload: [bitmap][len0 chunk0][len1 chunk1]... Truncate chunk 0
    // to a single byte so its arithmetic stream runs dry mid-tile.
    Container broken = r.container;
    const std::vector<uint8_t>& orig = r.container.frame_payloads[0];
    std::vector<uint8_t> rebuilt(orig.begin(), orig.begin() + 1);  // 4 tiles: 1 bitmap byte
    size_t pos = 1;
    for (int t = 0; t < 4; t++) {
        uint32_t len = (uint32_t)orig[pos] | ((uint32_t)orig[pos + 1] << 8) |
                       ((uint32_t)orig[pos + 2] << 16) | ((uint32_t)orig[pos + 3] << 24);
        const uint8_t* chunk = orig.data() + pos + 4;
        uint32_t keep = t == 0 ? std::min<uint32_t>(1, len) : len;
        rebuilt.push_back((uint8_t)keep);
        rebuilt.push_back((uint8_t)(keep >> 8));
        rebuilt.push_back((uint8_t)(keep >> 16));
        rebuilt.push_back((uint8_t)(keep >> 24));
        rebuilt.insert(rebuilt.end(), chunk, chunk + keep);
        pos += 4 + len;
    }
    broken.frame_payloads[0] = rebuilt;

    DecodeResult d = decode_sequence(broken);
    REQUIRE(d.video.frames.size() == 3);
    // Tile (0,0) of frame 0 lost its data: gray fill or garbage, but not the
    // original content.
    int diff = 0;
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++) diff += d.video.frames[0].Y(x, y) != ref.frames[0].Y(x, y);
    CHECK(diff > 0);
    // The other tiles of frame 0 and all later frames are untouched.
    for (int y = 0; y < 64; y++)
        for (int x = 32; x < 64; x++) REQUIRE(d.video.frames[0].Y(x, y) == ref.frames[0].Y(x, y));
    for (int y = 32; y < 64; y++)
        for (int x = 0; x < 32; x++) REQUIRE(d.video.frames[0].Y(x, y) == ref.frames[0].Y(x, y));
    for (int f = 1; f < 3; f++) REQUIRE(d.video.frames[(size_t)f] == ref.frames[(size_t)f]);
}

TEST_CASE("corrupt frame structure grays the frame and decoding continues") {
    VideoSequence s = textured_clip(64, 64, 3, 16, 0);
    CodecConfig cfg = small_cfg();
    cfg.gop = "I";
    EncodeOptions opt;
    opt.cfg = cfg;
    EncodeResult r = encode_sequence(s, opt);
    VideoSequence ref = decode_sequence(r.container).video;

    Container broken = r.container;
    broken.frame_payloads[1].resize(3);  // cuts inside the tile table

    DecodeResult d = decode_sequence(broken);
    REQUIRE(d.video.frames.size() == 3);
    REQUIRE(d.video.frames[0] == ref.frames[0]);
    for (uint8_t v : d.video.frames[1].y) REQUIRE(v == 128);
    for (uint8_t v : d.video.frames[1].u) REQUIRE(v == 128);
    CHECK(!d.tiles[1].any());
    REQUIRE(d.video.frames[2] == ref.frames[2]);
}

TEST_CASE("tampered stream bytes never crash the keyless decoder") {
    VideoSequence s = textured_clip(64, 64, 2, 17, 2);
    std::vector<RoiRecord> recs{{0, 0, {0, 0, 64, 64}}, {1, 0, {0, 0, 64, 64}}};
    RoiMap roi(recs, s.spec);
    StreamKey k = test_key(50);
    EncodeOptions opt;
    opt.cfg = small_cfg();
    opt.roi = &roi;
    opt.level = Level::Advanced;
    opt.key = &k;
    EncodeResult r = encode_sequence(s, opt);

    std::mt19937 rng(18);
    for (int trial = 0; trial < 60; trial++) {
        Container broken = r.container;
        std::vector<uint8_t>& p = broken.frame_payloads[rng() % 2];
        if (p.empty()) continue;
        p[rng() % p.size()] ^= (uint8_t)(1u << (rng() % 8));
        DecodeResult d;
        REQUIRE_NOTHROW(d = decode_sequence(broken));
        REQUIRE(d.video.frames.size() == 2);
    }
}
