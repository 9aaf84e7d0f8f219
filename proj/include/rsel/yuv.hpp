#pragma once

// Planar YUV 4:2:0 (I420) sequence I/O.

#include <cstdio>
#include <vector>

#include "rsel/common.hpp"

namespace rsel {

struct VideoSpec {
    int width = 0;
    int height = 0;
    int frame_count = 0;  // 0 on read = take every complete frame in the file
    int fps = 30;

    int chroma_width() const { return (width + 1) / 2; }
    int chroma_height() const { return (height + 1) / 2; }
    size_t luma_size() const { return (size_t)width * height; }
    size_t chroma_size() const { return (size_t)chroma_width() * chroma_height(); }
    size_t frame_bytes() const { return luma_size() + 2 * chroma_size(); }
};

struct Frame {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> y, u, v;

    Frame() = default;
    Frame(int w, int h)
        : width(w), height(h),
          y((size_t)w * h),
          u((size_t)((w + 1) / 2) * ((h + 1) / 2)),
          v((size_t)((w + 1) / 2) * ((h + 1) / 2)) {}

    int cw() const { return (width + 1) / 2; }
    int ch() const { return (height + 1) / 2; }

    uint8_t& Y(int x, int y_) { return y[(size_t)y_ * width + x]; }
    uint8_t Y(int x, int y_) const { return y[(size_t)y_ * width + x]; }
    uint8_t& U(int x, int y_) { return u[(size_t)y_ * cw() + x]; }
    uint8_t U(int x, int y_) const { return u[(size_t)y_ * cw() + x]; }
    uint8_t& V(int x, int y_) { return v[(size_t)y_ * cw() + x]; }
    uint8_t V(int x, int y_) const { return v[(size_t)y_ * cw() + x]; }

    bool operator==(const Frame&) const = default;
};

struct VideoSequence {
    VideoSpec spec;
    std::vector<Frame> frames;
};

enum class Plane { Y, U, V };

// Maps a luma-space region onto the chroma grid: floor for the top-left
// corner, ceil for the bottom-right, so every covered chroma sample is kept.
inline PixelRegion chroma_region(const PixelRegion& r) {
    return PixelRegion{r.x1 >> 1, r.y1 >> 1, (r.x2 + 1) >> 1, (r.y2 + 1) >> 1};
}

// Region coordinates are in the coordinate space of the chosen plane.
inline std::vector<uint8_t> extract_region(const Frame& f, const PixelRegion& r, Plane p) {
    int w = (p == Plane::Y) ? f.width : f.cw();
    int h = (p == Plane::Y) ? f.height : f.ch();
    if (r.x1 < 0 || r.y1 < 0 || r.x2 > w || r.y2 > h || r.empty())
        throw RangeError("extract_region: region (" + std::to_string(r.x1) + "," +
                         std::to_string(r.y1) + "," + std::to_string(r.x2) + "," +
                         std::to_string(r.y2) + ") invalid for plane " +
                         std::to_string(w) + "x" + std::to_string(h));
    const std::vector<uint8_t>& src = (p == Plane::Y) ? f.y : (p == Plane::U) ? f.u : f.v;
    std::vector<uint8_t> out;
    out.reserve((size_t)r.width() * r.height());
    for (int yy = r.y1; yy < r.y2; yy++)
        for (int xx = r.x1; xx < r.x2; xx++)
            out.push_back(src[(size_t)yy * w + xx]);
    return out;
}

inline VideoSequence read_sequence(const std::string& path, const VideoSpec& spec) {
    if (spec.width <= 0 || spec.height <= 0)
        throw RangeError("read_sequence: non-positive dimensions");
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("read_sequence: cannot open '" + path + "'");
    std::fseek(fp, 0, SEEK_END);
    long fsize = std::ftell(fp);
    std::fseek(fp, 0, SEEK_SET);

    size_t fb = spec.frame_bytes();
    size_t want = spec.frame_count > 0 ? (size_t)spec.frame_count : (size_t)fsize / fb;
    if ((size_t)fsize < want * fb) {
        std::fclose(fp);
        throw IoError("read_sequence: '" + path + "' truncated: expected " +
                      std::to_string(want * fb) + " bytes (" + std::to_string(want) +
                      " frames), have " + std::to_string(fsize));
    }

    VideoSequence seq;
    seq.spec = spec;
    seq.spec.frame_count = (int)want;
    seq.frames.reserve(want);
    for (size_t i = 0; i < want; i++) {
        Frame f(spec.width, spec.height);
        if (std::fread(f.y.data(), 1, f.y.size(), fp) != f.y.size() ||
            std::fread(f.u.data(), 1, f.u.size(), fp) != f.u.size() ||
            std::fread(f.v.data(), 1, f.v.size(), fp) != f.v.size()) {
            std::fclose(fp);
            throw IoError("read_sequence: short read in frame " + std::to_string(i));
        }
        seq.frames.push_back(std::move(f));
    }
    std::fclose(fp);
    return seq;
}

inline void write_sequence(const std::string& path, const VideoSequence& seq) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("write_sequence: cannot open '" + path + "' for writing");
    for (const Frame& f : seq.frames) {
        if (std::fwrite(f.y.data(), 1, f.y.size(), fp) != f.y.size() ||
            std::fwrite(f.u.data(), 1, f.u.size(), fp) != f.u.size() ||
            std::fwrite(f.v.data(), 1, f.v.size(), fp) != f.v.size()) {
            std::fclose(fp);
            throw IoError("write_sequence: short write to '" + path + "'");
        }
    }
    if (std::fclose(fp) != 0) throw IoError("write_sequence: close failed for '" + path + "'");
}

}  // namespace rsel
