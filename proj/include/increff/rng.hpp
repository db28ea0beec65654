#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace increff {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derive an independent stream seed from a root seed and a path of stream ids,
/// e.g. derive_seed(seed, {replicate, delta_index}).
inline std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t s = mix64(root);
    for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

inline Rng make_rng(std::uint64_t root, std::initializer_list<std::uint64_t> path = {}) {
    return Rng(derive_seed(root, path));
}

/// Uniform draw on [0, 1).
inline double uniform01(Rng& rng) {
    return std::generate_canonical<double, 53>(rng);
}

inline int bernoulli(Rng& rng, double p) {
    return uniform01(rng) < p ? 1 : 0;
}

} // namespace increff
