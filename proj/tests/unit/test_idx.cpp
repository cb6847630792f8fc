#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "crossprop/idx.hpp"

using namespace crossprop;

namespace {

std::vector<std::uint8_t> image_header(std::uint32_t magic, std::uint32_t count,
                                       std::uint32_t rows, std::uint32_t cols) {
    std::vector<std::uint8_t> b;
    for (std::uint32_t v : {magic, count, rows, cols}) {
        b.push_back(static_cast<std::uint8_t>(v >> 24));
        b.push_back(static_cast<std::uint8_t>(v >> 16));
        b.push_back(static_cast<std::uint8_t>(v >> 8));
        b.push_back(static_cast<std::uint8_t>(v));
    }
    return b;
}

}  // namespace

TEST_CASE("parse_idx_images accepts a minimal all-zero image") {
    auto bytes = image_header(2051, 1, 28, 28);
    bytes.resize(16 + 784, 0);
    const ImageSet set = parse_idx_images(bytes);
    REQUIRE(set.count == 1);
    REQUIRE(set.rows == 28);
    REQUIRE(set.cols == 28);
    for (double p : set.pixels.values()) REQUIRE(p == 0.0);
}

TEST_CASE("pixel normalization endpoints are exact") {
    auto bytes = image_header(2051, 1, 28, 28);
    bytes.resize(16 + 784, 0);
    bytes[16] = 255;
    bytes[17] = 128;
    const ImageSet set = parse_idx_images(bytes);
    REQUIRE(set.pixels(0, 0) == 1.0);
    REQUIRE(set.pixels(0, 1) == 128.0 / 255.0);
    REQUIRE(set.pixels(0, 2) == 0.0);
}

TEST_CASE("parse_idx_images structured errors name the offset") {
    SECTION("wrong magic") {
        auto bytes = image_header(2052, 1, 28, 28);
        bytes.resize(16 + 784, 0);
        try {
            parse_idx_images(bytes);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.offset() == 0);
        }
    }
    SECTION("truncated header") {
        const std::vector<std::uint8_t> bytes{0x00, 0x00, 0x08};
        try {
            parse_idx_images(bytes);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.offset() == 3);
        }
    }
    SECTION("bad row count") {
        auto bytes = image_header(2051, 1, 27, 28);
        bytes.resize(16 + 784, 0);
        try {
            parse_idx_images(bytes);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.offset() == 8);
        }
    }
    SECTION("bad column count") {
        auto bytes = image_header(2051, 1, 28, 29);
        bytes.resize(16 + 784, 0);
        try {
            parse_idx_images(bytes);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.offset() == 12);
        }
    }
    SECTION("truncated payload") {
        auto bytes = image_header(2051, 2, 28, 28);
        bytes.resize(16 + 784, 0);  // one image short
        REQUIRE_THROWS_AS(parse_idx_images(bytes), ParseError);
    }
}

TEST_CASE("parse_idx_labels reads labels verbatim") {
    std::vector<std::uint8_t> bytes{0, 0, 8, 1, 0, 0, 0, 3, 0, 5, 9};
    const LabelSet set = parse_idx_labels(bytes);
    REQUIRE(set.count == 3);
    REQUIRE(set.labels == std::vector<std::uint8_t>{0, 5, 9});
}

TEST_CASE("parse_idx_labels rejects malformed input") {
    SECTION("wrong magic") {
        const std::vector<std::uint8_t> bytes{0, 0, 8, 3, 0, 0, 0, 1, 0};
        try {
            parse_idx_labels(bytes);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.offset() == 0);
        }
    }
    SECTION("out-of-range label byte") {
        const std::vector<std::uint8_t> bytes{0, 0, 8, 1, 0, 0, 0, 2, 4, 10};
        try {
            parse_idx_labels(bytes);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            REQUIRE(e.offset() == 9);
        }
    }
    SECTION("truncated payload") {
        const std::vector<std::uint8_t> bytes{0, 0, 8, 1, 0, 0, 0, 5, 1, 2};
        REQUIRE_THROWS_AS(parse_idx_labels(bytes), ParseError);
    }
    SECTION("empty stream") {
        REQUIRE_THROWS_AS(parse_idx_labels(std::vector<std::uint8_t>{}), ParseError);
    }
}

TEST_CASE("idx image round-trips are exact") {
    std::mt19937_64 rng(5150);
    std::uniform_int_distribution<int> byte(0, 255);

    // bytes -> parse -> write reproduces the file; parse -> write -> parse
    // reproduces the structure.
    auto bytes = image_header(2051, 3, 28, 28);
    for (int i = 0; i < 3 * 784; ++i) bytes.push_back(static_cast<std::uint8_t>(byte(rng)));
    const ImageSet set = parse_idx_images(bytes);
    REQUIRE(write_idx_images(set) == bytes);
    REQUIRE(parse_idx_images(write_idx_images(set)) == set);
}

TEST_CASE("idx label round-trips are exact") {
    std::mt19937_64 rng(616);
    std::uniform_int_distribution<int> digit(0, 9);
    LabelSet set;
    set.count = 257;
    set.labels.resize(set.count);
    for (auto& l : set.labels) l = static_cast<std::uint8_t>(digit(rng));
    REQUIRE(parse_idx_labels(write_idx_labels(set)) == set);
}

TEST_CASE("shift_labels wraps modulo ten") {
    LabelSet set;
    set.count = 3;
    set.labels = {9, 0, 4};
    REQUIRE(shift_labels(set, 0) == set);
    REQUIRE(shift_labels(set, 10) == set);
    REQUIRE(shift_labels(set, 1).labels == std::vector<std::uint8_t>{0, 1, 5});
    REQUIRE(shift_labels(set, -1).labels == std::vector<std::uint8_t>{8, 9, 3});
}

TEST_CASE("shift_labels composes additively") {
    std::mt19937_64 rng(33);
    std::uniform_int_distribution<int> digit(0, 9);
    std::uniform_int_distribution<long> shift(-25, 25);
    LabelSet set;
    set.count = 64;
    set.labels.resize(set.count);
    for (auto& l : set.labels) l = static_cast<std::uint8_t>(digit(rng));
    for (int trial = 0; trial < 20; ++trial) {
        const long a = shift(rng), b = shift(rng);
        REQUIRE(shift_labels(shift_labels(set, a), b) == shift_labels(set, a + b));
    }
}

TEST_CASE("load_idx reports unreadable files as parse errors") {
    REQUIRE_THROWS_AS(load_idx_images("/nonexistent/path/images.idx"), ParseError);
    REQUIRE_THROWS_AS(load_idx_labels("/nonexistent/path/labels.idx"), ParseError);
}
