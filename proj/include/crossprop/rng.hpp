#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace crossprop {

using Rng = std::mt19937_64;

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Derives an independent stream seed from a base seed and a label, so every
// consumer (target construction, input sampling, noise, mutation, ...) gets
// its own reproducible generator. An optional index separates per-task or
// per-run substreams under the same label.
inline std::uint64_t derive_stream(std::uint64_t seed, std::string_view label,
                                   std::uint64_t index = 0) {
    std::uint64_t x = detail::splitmix64(seed ^ detail::fnv1a(label));
    return detail::splitmix64(x ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, std::string_view label, std::uint64_t index = 0) {
    return Rng(derive_stream(seed, label, index));
}

}  // namespace crossprop
