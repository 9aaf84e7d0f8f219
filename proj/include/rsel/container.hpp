#pragma once

// On-disk container: a fixed little-endian header followed by length-prefixed
// per-frame payloads. Each frame payload is a tile classification bitmap plus
// one length-prefixed arithmetic chunk per tile (tiles decode independently).
// Layout details in docs/FORMAT.md.

#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "rsel/cipher.hpp"
#include "rsel/common.hpp"

namespace rsel {

constexpr char kContainerMagic[4] = {'R', 'S', 'E', 'L'};
constexpr uint32_t kContainerVersion = 1;

struct ContainerHeader {
    uint32_t version = kContainerVersion;
    uint32_t width = 0;
    uint32_t height = 0;
    uint32_t frame_count = 0;
    uint32_t tile_w = 32;
    uint32_t tile_h = 32;
    uint32_t cu_size = 16;
    uint32_t tu_size = 8;
    uint32_t qp = 24;
    char gop[8] = {'I', 'B', 'B', 'B', 0, 0, 0, 0};
    uint32_t max_dqp = 12;
    uint32_t max_ref_frames = 2;
    Level level = Level::None;
    uint64_t nonce = 0;

    std::string gop_string() const {
        size_t n = 0;
        while (n < 8 && gop[n]) n++;
        return std::string(gop, gop + n);
    }

    void set_gop(const std::string& s) {
        if (s.empty() || s.size() > 8) throw RangeError("gop pattern must be 1..8 characters");
        std::memset(gop, 0, 8);
        std::memcpy(gop, s.data(), s.size());
    }
};

struct Container {
    ContainerHeader header;
    std::vector<std::vector<uint8_t>> frame_payloads;

    // Payload bytes as counted by the bitrate metrics (header excluded).
    uint64_t payload_bytes() const {
        uint64_t n = 0;
        for (const auto& p : frame_payloads) n += p.size();
        return n;
    }
};

namespace detail {

inline void put_u32le(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; i++) out.push_back((uint8_t)(v >> (8 * i)));
}

inline void put_u64le(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; i++) out.push_back((uint8_t)(v >> (8 * i)));
}

class ByteReader {
public:
    ByteReader(const uint8_t* p, size_t n) : p_(p), n_(n) {}

    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; i++) v |= (uint32_t)p_[pos_ + i] << (8 * i);
        pos_ += 4;
        return v;
    }

    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; i++) v |= (uint64_t)p_[pos_ + i] << (8 * i);
        pos_ += 8;
        return v;
    }

    uint8_t u8() {
        need(1);
        return p_[pos_++];
    }

    void bytes(void* dst, size_t n) {
        need(n);
        std::memcpy(dst, p_ + pos_, n);
        pos_ += n;
    }

    size_t remaining() const { return n_ - pos_; }
    size_t pos() const { return pos_; }

private:
    void need(size_t n) {
        if (pos_ + n > n_)
            throw CorruptStreamError("container truncated: need " + std::to_string(n) +
                                     " bytes at offset " + std::to_string(pos_) + ", have " +
                                     std::to_string(n_ - pos_));
    }

    const uint8_t* p_;
    size_t n_;
    size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<uint8_t> serialize_container(const Container& c) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
    detail::put_u32le(out, c.header.version);
    detail::put_u32le(out, c.header.width);
    detail::put_u32le(out, c.header.height);
    detail::put_u32le(out, c.header.frame_count);
    detail::put_u32le(out, c.header.tile_w);
    detail::put_u32le(out, c.header.tile_h);
    detail::put_u32le(out, c.header.cu_size);
    detail::put_u32le(out, c.header.tu_size);
    detail::put_u32le(out, c.header.qp);
    out.insert(out.end(), c.header.gop, c.header.gop + 8);
    detail::put_u32le(out, c.header.max_dqp);
    detail::put_u32le(out, c.header.max_ref_frames);
    out.push_back((uint8_t)c.header.level);
    out.push_back(0);
    out.push_back(0);
    out.push_back(0);
    detail::put_u64le(out, c.header.nonce);
    if (c.frame_payloads.size() != c.header.frame_count)
        throw RangeError("serialize_container: frame count mismatch");
    for (const auto& p : c.frame_payloads) {
        detail::put_u32le(out, (uint32_t)p.size());
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

inline Container parse_container(const uint8_t* data, size_t size) {
    detail::ByteReader r(data, size);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kContainerMagic, 4) != 0)
        throw CorruptStreamError("not a container: bad magic");
    Container c;
    c.header.version = r.u32();
    if (c.header.version != kContainerVersion)
        throw CorruptStreamError("unsupported container version " +
                                 std::to_string(c.header.version));
    c.header.width = r.u32();
    c.header.height = r.u32();
    c.header.frame_count = r.u32();
    c.header.tile_w = r.u32();
    c.header.tile_h = r.u32();
    c.header.cu_size = r.u32();
    c.header.tu_size = r.u32();
    c.header.qp = r.u32();
    r.bytes(c.header.gop, 8);
    c.header.max_dqp = r.u32();
    c.header.max_ref_frames = r.u32();
    uint8_t lvl = r.u8();
    if (lvl > 3) throw CorruptStreamError("bad level tag " + std::to_string(lvl));
    c.header.level = (Level)lvl;
    r.u8();
    r.u8();
    r.u8();
    c.header.nonce = r.u64();
    c.frame_payloads.reserve(c.header.frame_count);
    for (uint32_t i = 0; i < c.header.frame_count; i++) {
        uint32_t len = r.u32();
        if (len > r.remaining())
            throw CorruptStreamError("frame " + std::to_string(i) + " payload truncated");
        std::vector<uint8_t> p(len);
        r.bytes(p.data(), len);
        c.frame_payloads.push_back(std::move(p));
    }
    if (r.remaining() != 0)
        throw CorruptStreamError("container has " + std::to_string(r.remaining()) +
                                 " trailing bytes");
    return c;
}

inline void write_container(const std::string& path, const Container& c) {
    std::vector<uint8_t> bytes = serialize_container(c);
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("write_container: cannot open '" + path + "'");
    size_t n = std::fwrite(bytes.data(), 1, bytes.size(), fp);
    if (n != bytes.size() || std::fclose(fp) != 0)
        throw IoError("write_container: short write to '" + path + "'");
}

inline Container read_container(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("read_container: cannot open '" + path + "'");
    std::fseek(fp, 0, SEEK_END);
    long size = std::ftell(fp);
    std::fseek(fp, 0, SEEK_SET);
    std::vector<uint8_t> bytes((size_t)size);
    if (std::fread(bytes.data(), 1, bytes.size(), fp) != bytes.size()) {
        std::fclose(fp);
        throw IoError("read_container: short read from '" + path + "'");
    }
    std::fclose(fp);
    return parse_container(bytes.data(), bytes.size());
}

}  // namespace rsel
