#pragma once

// ROI description files and the tile-level classification derived from them.
//
// File grammar, one record per line:
//     frame ':' '[' idx ',' '(' x1 ',' y1 ',' x2 ',' y2 ')' ']'
// Integers are decimal, whitespace between tokens is ignored, '#' starts a
// comment, blank lines are skipped. Coordinates are 0-based, half-open.

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "rsel/common.hpp"
#include "rsel/yuv.hpp"

namespace rsel {

struct RoiRecord {
    int frame_idx = 0;
    int roi_idx = 0;
    PixelRegion region;

    bool operator==(const RoiRecord&) const = default;
};

namespace detail {

class RoiLineParser {
public:
    RoiLineParser(const std::string& line, int line_no) : s_(line), line_no_(line_no) {}

    bool at_end() {
        skip_ws();
        return pos_ >= s_.size() || s_[pos_] == '#';
    }

    int number() {
        skip_ws();
        size_t start = pos_;
        if (pos_ < s_.size() && (s_[pos_] == '-' || s_[pos_] == '+')) pos_++;
        while (pos_ < s_.size() && std::isdigit((unsigned char)s_[pos_])) pos_++;
        if (pos_ == start || (pos_ == start + 1 && !std::isdigit((unsigned char)s_[start])))
            fail("expected integer");
        return std::stoi(s_.substr(start, pos_ - start));
    }

    void expect(char c) {
        skip_ws();
        if (pos_ >= s_.size() || s_[pos_] != c)
            fail(std::string("expected '") + c + "'");
        pos_++;
    }

    [[noreturn]] void fail(const std::string& what) {
        throw ParseError("roi file line " + std::to_string(line_no_) + ": " + what +
                         " at column " + std::to_string(pos_ + 1));
    }

private:
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace((unsigned char)s_[pos_])) pos_++;
    }

    const std::string& s_;
    size_t pos_ = 0;
    int line_no_;
};

}  // namespace detail

inline std::vector<RoiRecord> parse_roi_text(std::istream& in) {
    std::vector<RoiRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        line_no++;
        detail::RoiLineParser p(line, line_no);
        if (p.at_end()) continue;
        RoiRecord r;
        r.frame_idx = p.number();
        p.expect(':');
        p.expect('[');
        r.roi_idx = p.number();
        p.expect(',');
        p.expect('(');
        r.region.x1 = p.number();
        p.expect(',');
        r.region.y1 = p.number();
        p.expect(',');
        r.region.x2 = p.number();
        p.expect(',');
        r.region.y2 = p.number();
        p.expect(')');
        p.expect(']');
        if (!p.at_end()) p.fail("trailing characters");
        if (r.frame_idx < 0) p.fail("negative frame index");
        if (r.region.empty())
            p.fail("degenerate region (" + std::to_string(r.region.x1) + "," +
                   std::to_string(r.region.y1) + "," + std::to_string(r.region.x2) + "," +
                   std::to_string(r.region.y2) + ")");
        records.push_back(r);
    }
    std::stable_sort(records.begin(), records.end(),
                     [](const RoiRecord& a, const RoiRecord& b) { return a.frame_idx < b.frame_idx; });
    return records;
}

inline std::vector<RoiRecord> parse_roi_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("parse_roi_file: cannot open '" + path + "'");
    return parse_roi_text(in);
}

// Frame-indexed view of the records, validated against a video spec.
class RoiMap {
public:
    RoiMap() = default;

    RoiMap(const std::vector<RoiRecord>& records, const VideoSpec& spec) {
        for (const RoiRecord& r : records) {
            if (r.frame_idx >= spec.frame_count)
                throw RangeError("roi: record for frame " + std::to_string(r.frame_idx) +
                                 " but sequence has " + std::to_string(spec.frame_count) +
                                 " frames");
            if (r.region.x1 < 0 || r.region.y1 < 0 || r.region.x2 > spec.width ||
                r.region.y2 > spec.height)
                throw RangeError("roi: frame " + std::to_string(r.frame_idx) + " region (" +
                                 std::to_string(r.region.x1) + "," + std::to_string(r.region.y1) +
                                 "," + std::to_string(r.region.x2) + "," +
                                 std::to_string(r.region.y2) + ") outside " +
                                 std::to_string(spec.width) + "x" + std::to_string(spec.height));
            by_frame_[r.frame_idx].push_back(r.region);
        }
    }

    const std::vector<PixelRegion>& regions(int frame) const {
        static const std::vector<PixelRegion> none;
        auto it = by_frame_.find(frame);
        return it == by_frame_.end() ? none : it->second;
    }

    bool any() const { return !by_frame_.empty(); }

private:
    std::map<int, std::vector<PixelRegion>> by_frame_;
};

struct TileGrid {
    int frame_w = 0, frame_h = 0;
    int tile_w = 32, tile_h = 32;

    int cols() const { return ceil_div(frame_w, tile_w); }
    int rows() const { return ceil_div(frame_h, tile_h); }
    int count() const { return cols() * rows(); }

    // Tile rectangles clip at the right/bottom frame edges.
    PixelRegion tile_rect(int tx, int ty) const {
        PixelRegion r{tx * tile_w, ty * tile_h, (tx + 1) * tile_w, (ty + 1) * tile_h};
        return r.clipped(frame_w, frame_h);
    }
};

// Half-open overlap test between one tile and one ROI rectangle.
inline bool mark_tile(const TileGrid& g, int tx, int ty, const PixelRegion& roi) {
    return g.tile_rect(tx, ty).intersects(roi);
}

// One bool per tile, row-major; true = ROI tile.
struct TileClassification {
    TileGrid grid;
    std::vector<uint8_t> roi;  // grid.count() entries

    bool is_roi(int tx, int ty) const { return roi[(size_t)ty * grid.cols() + tx] != 0; }
    bool any() const {
        for (uint8_t b : roi)
            if (b) return true;
        return false;
    }
};

inline TileClassification classify_tiles(const TileGrid& g,
                                         const std::vector<PixelRegion>& regions) {
    TileClassification c;
    c.grid = g;
    c.roi.assign((size_t)g.count(), 0);
    for (int ty = 0; ty < g.rows(); ty++)
        for (int tx = 0; tx < g.cols(); tx++)
            for (const PixelRegion& r : regions)
                if (mark_tile(g, tx, ty, r)) {
                    c.roi[(size_t)ty * g.cols() + tx] = 1;
                    break;
                }
    return c;
}

// Frame-sized 0/1 mask of the ROI tiles (tiles clipped at the frame edges).
inline std::vector<uint8_t> pixel_mask(const TileClassification& c) {
    std::vector<uint8_t> m((size_t)c.grid.frame_w * c.grid.frame_h, 0);
    for (int ty = 0; ty < c.grid.rows(); ty++)
        for (int tx = 0; tx < c.grid.cols(); tx++) {
            if (!c.is_roi(tx, ty)) continue;
            PixelRegion r = c.grid.tile_rect(tx, ty);
            for (int yy = r.y1; yy < r.y2; yy++)
                for (int xx = r.x1; xx < r.x2; xx++)
                    m[(size_t)yy * c.grid.frame_w + xx] = 1;
        }
    return m;
}

// S_ROI: the coding units (cu_size grid over the frame, clipped) that overlap
// any ROI tile. These are exactly the units the encryptor touches.
inline std::vector<PixelRegion> roi_unit_set(const TileClassification& c, int cu_size) {
    if (cu_size <= 0 || c.grid.tile_w % cu_size != 0 || c.grid.tile_h % cu_size != 0)
        throw RangeError("roi_unit_set: cu_size " + std::to_string(cu_size) +
                         " must divide tile " + std::to_string(c.grid.tile_w) + "x" +
                         std::to_string(c.grid.tile_h));
    std::vector<PixelRegion> units;
    int ucols = ceil_div(c.grid.frame_w, cu_size);
    int urows = ceil_div(c.grid.frame_h, cu_size);
    for (int uy = 0; uy < urows; uy++)
        for (int ux = 0; ux < ucols; ux++) {
            PixelRegion u{ux * cu_size, uy * cu_size, (ux + 1) * cu_size, (uy + 1) * cu_size};
            u = u.clipped(c.grid.frame_w, c.grid.frame_h);
            bool hit = false;
            for (int ty = 0; ty < c.grid.rows() && !hit; ty++)
                for (int tx = 0; tx < c.grid.cols() && !hit; tx++)
                    if (c.is_roi(tx, ty) && c.grid.tile_rect(tx, ty).intersects(u)) hit = true;
            if (hit) units.push_back(u);
        }
    return units;
}

}  // namespace rsel
