#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "crossprop/errors.hpp"
#include "crossprop/matrix.hpp"

namespace crossprop {

inline constexpr std::uint32_t kIdxImageMagic = 2051;  // 0x00000803
inline constexpr std::uint32_t kIdxLabelMagic = 2049;  // 0x00000801
inline constexpr std::size_t kMnistRows = 28;
inline constexpr std::size_t kMnistCols = 28;
inline constexpr std::size_t kMnistPixels = kMnistRows * kMnistCols;

// Pixels are stored normalized: value = raw byte / 255, so every entry lies
// in [0, 1] with the endpoints exact.
struct ImageSet {
    std::size_t count = 0;
    std::size_t rows = kMnistRows;
    std::size_t cols = kMnistCols;
    Matrix pixels;  // count x 784

    friend bool operator==(const ImageSet& a, const ImageSet& b) {
        return a.count == b.count && a.rows == b.rows && a.cols == b.cols &&
               a.pixels == b.pixels;
    }
};

struct LabelSet {
    std::size_t count = 0;
    std::vector<std::uint8_t> labels;  // each in [0, 9]

    friend bool operator==(const LabelSet& a, const LabelSet& b) = default;
};

namespace detail {

inline std::uint32_t read_u32_be(std::span<const std::uint8_t> bytes, std::size_t offset,
                                 const char* what) {
    if (offset + 4 > bytes.size())
        throw ParseError(std::string("truncated ") + what, bytes.size());
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

inline void write_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

inline ImageSet parse_idx_images(std::span<const std::uint8_t> bytes) {
    const std::uint32_t magic = detail::read_u32_be(bytes, 0, "image header");
    if (magic != kIdxImageMagic)
        throw ParseError("bad image magic " + std::to_string(magic) + ", expected " +
                             std::to_string(kIdxImageMagic),
                         0);
    const std::uint32_t count = detail::read_u32_be(bytes, 4, "image header");
    const std::uint32_t rows = detail::read_u32_be(bytes, 8, "image header");
    const std::uint32_t cols = detail::read_u32_be(bytes, 12, "image header");
    if (rows != kMnistRows)
        throw ParseError("unsupported row count " + std::to_string(rows) + ", expected 28", 8);
    if (cols != kMnistCols)
        throw ParseError("unsupported column count " + std::to_string(cols) + ", expected 28", 12);
    const std::size_t expected = 16 + static_cast<std::size_t>(count) * kMnistPixels;
    if (bytes.size() < expected)
        throw ParseError("truncated image payload: need " + std::to_string(expected) +
                             " bytes, have " + std::to_string(bytes.size()),
                         bytes.size());

    ImageSet set;
    set.count = count;
    set.pixels = Matrix(count, kMnistPixels);
    auto out = set.pixels.values();
    for (std::size_t p = 0; p < static_cast<std::size_t>(count) * kMnistPixels; ++p)
        out[p] = static_cast<double>(bytes[16 + p]) / 255.0;
    return set;
}

inline LabelSet parse_idx_labels(std::span<const std::uint8_t> bytes) {
    const std::uint32_t magic = detail::read_u32_be(bytes, 0, "label header");
    if (magic != kIdxLabelMagic)
        throw ParseError("bad label magic " + std::to_string(magic) + ", expected " +
                             std::to_string(kIdxLabelMagic),
                         0);
    const std::uint32_t count = detail::read_u32_be(bytes, 4, "label header");
    if (bytes.size() < 8 + static_cast<std::size_t>(count))
        throw ParseError("truncated label payload: need " + std::to_string(8 + count) +
                             " bytes, have " + std::to_string(bytes.size()),
                         bytes.size());
    LabelSet set;
    set.count = count;
    set.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t b = bytes[8 + i];
        if (b > 9)
            throw ParseError("label byte " + std::to_string(b) + " out of range [0, 9]", 8 + i);
        set.labels[i] = b;
    }
    return set;
}

inline std::vector<std::uint8_t> write_idx_images(const ImageSet& set) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + set.count * kMnistPixels);
    detail::write_u32_be(out, kIdxImageMagic);
    detail::write_u32_be(out, static_cast<std::uint32_t>(set.count));
    detail::write_u32_be(out, static_cast<std::uint32_t>(set.rows));
    detail::write_u32_be(out, static_cast<std::uint32_t>(set.cols));
    for (double p : set.pixels.values())
        out.push_back(static_cast<std::uint8_t>(std::lround(p * 255.0)));
    return out;
}

inline std::vector<std::uint8_t> write_idx_labels(const LabelSet& set) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + set.count);
    detail::write_u32_be(out, kIdxLabelMagic);
    detail::write_u32_be(out, static_cast<std::uint32_t>(set.count));
    out.insert(out.end(), set.labels.begin(), set.labels.end());
    return out;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "'", 0);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

inline ImageSet load_idx_images(const std::filesystem::path& path) {
    return parse_idx_images(read_file_bytes(path));
}

inline LabelSet load_idx_labels(const std::filesystem::path& path) {
    return parse_idx_labels(read_file_bytes(path));
}

// (label + shift) mod 10, wrapping for any integer shift including negatives.
inline std::uint8_t shift_one_label(std::uint8_t label, long shift) {
    const long v = (static_cast<long>(label) + shift) % 10;
    return static_cast<std::uint8_t>(v < 0 ? v + 10 : v);
}

inline LabelSet shift_labels(const LabelSet& labels, long shift) {
    LabelSet out = labels;
    for (auto& l : out.labels) l = shift_one_label(l, shift);
    return out;
}

}  // namespace crossprop
