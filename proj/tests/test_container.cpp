#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "rsel/container.hpp"

using namespace rsel;

namespace {

Container sample_container() {
    Container c;
    c.header.width = 176;
    c.header.height = 144;
    c.header.frame_count = 3;
    c.header.tile_w = 48;
    c.header.tile_h = 32;
    c.header.cu_size = 16;
    c.header.tu_size = 4;
    c.header.qp = 37;
    c.header.set_gop("IPBB");
    c.header.max_dqp = 5;
    c.header.max_ref_frames = 3;
    c.header.level = Level::Enhanced;
    c.header.nonce = 0xdeadbeefcafef00dull;
    c.frame_payloads = {{1, 2, 3}, {}, {0xff, 0x00, 0x80, 0x7f}};
    return c;
}

std::string temp_path(const char* stem) {
    return (std::filesystem::temp_directory_path() / stem).string();
}

}  // namespace

TEST_CASE("container header round-trips every field") {
    Container c = sample_container();
    std::string path = temp_path("rsel_container_rt.bin");
    write_container(path, c);

    Container back = read_container(path);
    CHECK(back.header.version == kContainerVersion);
    CHECK(back.header.width == 176);
    CHECK(back.header.height == 144);
    CHECK(back.header.frame_count == 3);
    CHECK(back.header.tile_w == 48);
    CHECK(back.header.tile_h == 32);
    CHECK(back.header.cu_size == 16);
    CHECK(back.header.tu_size == 4);
    CHECK(back.header.qp == 37);
    CHECK(back.header.gop_string() == "IPBB");
    CHECK(back.header.max_dqp == 5);
    CHECK(back.header.max_ref_frames == 3);
    CHECK(back.header.level == Level::Enhanced);
    CHECK(back.header.nonce == 0xdeadbeefcafef00dull);
    REQUIRE(back.frame_payloads.size() == 3);
    CHECK(back.frame_payloads == c.frame_payloads);
    CHECK(back.payload_bytes() == 7);

    std::filesystem::remove(path);
}

TEST_CASE("gop field accepts 1..8 characters") {
    ContainerHeader h;
    h.set_gop("I");
    CHECK(h.gop_string() == "I");
    h.set_gop("IPBBPBBB");
    CHECK(h.gop_string() == "IPBBPBBB");
    CHECK_THROWS_AS(h.set_gop(""), RangeError);
    CHECK_THROWS_AS(h.set_gop("IPBBPBBBP"), RangeError);
}

TEST_CASE("structural container damage is rejected") {
    Container c = sample_container();
    std::vector<uint8_t> bytes = serialize_container(c);

    auto parse = [](std::vector<uint8_t> b) { return parse_container(b.data(), b.size()); };

    // Baseline parses.
    CHECK(parse(bytes).header.width == 176);

    std::vector<uint8_t> bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(parse(bad), CorruptStreamError);  // magic

    bad = bytes;
    bad[4] = 99;
    CHECK_THROWS_AS(parse(bad), CorruptStreamError);  // version

    bad = bytes;
    bad.resize(bad.size() - 1);
    CHECK_THROWS_AS(parse(bad), CorruptStreamError);  // truncated payload

    bad = bytes;
    bad.resize(20);
    CHECK_THROWS_AS(parse(bad), CorruptStreamError);  // truncated header

    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(parse(bad), CorruptStreamError);  // trailing bytes

    bad = bytes;
    bad[56] = 9;  // level tag byte
    CHECK_THROWS_AS(parse(bad), CorruptStreamError);
}

TEST_CASE("serialize checks the frame table") {
    Container c = sample_container();
    c.frame_payloads.pop_back();
    CHECK_THROWS_AS(serialize_container(c), RangeError);
}

TEST_CASE("read_container io failures") {
    CHECK_THROWS_AS(read_container(temp_path("rsel_container_missing.bin")), IoError);
}
