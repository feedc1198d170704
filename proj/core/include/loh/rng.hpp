#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace loh {

// Deterministic random helpers. std::*_distribution sequences are
// implementation-defined, so golden tests use these instead; the mapping
// from mt19937_64 output to doubles below is fully specified.

inline double uniform01(std::mt19937_64& gen) {
    // 53 random mantissa bits -> [0, 1)
    return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Box-Muller. Two engine draws per sample, no cached spare.
inline double normal01(std::mt19937_64& gen) {
    double u1 = uniform01(gen);
    double u2 = uniform01(gen);
    // avoid log(0)
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
}

inline std::uint64_t uniform_index(std::mt19937_64& gen, std::uint64_t n) {
    // modulo bias is irrelevant for n << 2^64
    return gen() % n;
}

}  // namespace loh
