#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "rsel/binarization.hpp"

using namespace rsel;

namespace {

BinString bits(const char* s) {
    BinString b;
    for (; *s; s++) b.push_back((uint8_t)(*s - '0'));
    return b;
}

}  // namespace

TEST_CASE("exp-golomb fixed codewords") {
    CHECK(eg_encode(0, 0) == bits("1"));
    CHECK(eg_encode(1, 0) == bits("010"));
    CHECK(eg_encode(2, 0) == bits("011"));
    CHECK(eg_encode(3, 0) == bits("00100"));
    CHECK(eg_encode(0, 1) == bits("10"));
    CHECK(eg_encode(1, 1) == bits("11"));
    CHECK(eg_encode(2, 1) == bits("0100"));
    CHECK(eg_encode(5, 1) == bits("0111"));
    CHECK(eg_encode(6, 1) == bits("001000"));
    CHECK_THROWS_AS(eg_encode(0, 17), RangeError);
}

TEST_CASE("exp-golomb round-trips exhaustively for small orders") {
    for (int k = 0; k <= 3; k++)
        for (uint32_t v = 0; v <= 5000; v++) {
            BinString b = eg_encode(v, k);
            BinStringReader rd(b);
            EgDecoded d = eg_decode_full(rd, k);
            REQUIRE(d.value == v);
            REQUIRE(rd.exhausted());
            REQUIRE(d.prefix_len + d.suffix_len == (int)b.size());
        }
}

TEST_CASE("exp-golomb suffix split and join stay in the prefix class") {
    std::mt19937 rng(11);
    for (int k = 0; k <= 2; k++)
        for (uint32_t v = 0; v <= 2000; v++) {
            int slen;
            uint32_t suffix;
            eg_split(v, k, &slen, &suffix);
            CHECK(slen == eg_suffix_len(v, k));
            CHECK(eg_join(v, k, suffix) == v);
            if (slen == 0) continue;
            uint32_t s2 = rng() & ((1u << slen) - 1);
            uint32_t v2 = eg_join(v, k, s2);
            // Same codeword length, information bits replaced.
            CHECK(eg_suffix_len(v2, k) == slen);
            CHECK(eg_encode(v2, k).size() == eg_encode(v, k).size());
        }
}

TEST_CASE("eg decode rejects a runaway prefix") {
    BinString zeros(40, 0);
    BinStringReader rd(zeros);
    CHECK_THROWS_AS(eg_decode(rd, 0), CorruptStreamError);
}

TEST_CASE("truncated rice fixed codewords") {
    CHECK(tr_encode(0, 0, 4) == bits("0"));
    CHECK(tr_encode(1, 0, 4) == bits("10"));
    CHECK(tr_encode(3, 0, 4) == bits("1110"));
    CHECK(tr_encode(4, 0, 4) == bits("1111"));  // cap: no terminator
    CHECK(tr_encode(3, 1, 8) == bits("101"));
    CHECK(tr_encode(8, 1, 8) == bits("1111"));
    CHECK(tr_encode(0, 2, 16) == bits("000"));
    CHECK_THROWS_AS(tr_encode(5, 0, 4), RangeError);
    // At the cap only the smallest remainder is representable in TR itself.
    CHECK_THROWS_AS(tr_encode(7, 1, 7), RangeError);
}

TEST_CASE("truncated rice round-trips below and at the cap") {
    for (int k = 0; k <= 3; k++)
        for (uint32_t cmax : {1u, 2u, 3u, 4u, 5u, 8u, 16u, 31u, 32u, 100u, 256u}) {
            uint32_t cap = cmax >> k;
            if (cap == 0) continue;
            for (uint32_t v = 0; v <= cmax; v++) {
                if ((v >> k) >= cap && v != (cap << k)) continue;  // escape domain
                BinString b = tr_encode(v, k, cmax);
                BinStringReader rd(b);
                TrDecoded d = tr_decode_full(rd, k, cmax);
                REQUIRE(d.value == v);
                REQUIRE(d.escaped == ((v >> k) == cap));
                REQUIRE(rd.exhausted());
            }
        }
}

TEST_CASE("fixed-length codewords and round-trips") {
    CHECK(fl_encode(5, 3) == bits("101"));
    CHECK(fl_encode(31, 5) == bits("11111"));
    CHECK(fl_encode(0, 0).empty());
    CHECK_THROWS_AS(fl_encode(8, 3), RangeError);
    CHECK_THROWS_AS(fl_encode(0, 33), RangeError);

    std::mt19937 rng(5);
    for (int n = 0; n <= 16; n++) {
        uint32_t lim = n >= 12 ? 4096 : (1u << n);
        for (uint32_t t = 0; t < lim; t++) {
            uint32_t v = n >= 12 ? (uint32_t)rng() & ((1u << n) - 1) : t;
            BinString b = fl_encode(v, n);
            REQUIRE(b.size() == (size_t)n);
            BinStringReader rd(b);
            REQUIRE(fl_decode(rd, n) == v);
        }
    }
}

TEST_CASE("bin string reader throws on exhaustion") {
    BinString b = bits("10");
    BinStringReader rd(b);
    CHECK(rd() == 1);
    CHECK(rd() == 0);
    CHECK(rd.exhausted());
    CHECK_THROWS_AS(rd(), CorruptStreamError);
}
