#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>

// Deterministic random stream pipeline, version 1.
//
// Every random draw in the library comes from SplitMix64 streams seeded by
// the scheme below. The scheme is part of the on-disk contract: a store
// records only seeds, so retrieval on any machine must regenerate identical
// permutations, sign vectors and diagonals.
//
//   effective_seed      = global_seed + model_index          (u64 wraparound)
//   stream(seed, d, h)  = SplitMix64(mix64(mix64(seed + d) ^ h))
//   permutation stream  = stream(effective_seed, 1, fnv1a64(layer_type))
//   sign stream         = stream(effective_seed, 2, fnv1a64(layer_name))
//   diagonal stream     = stream(effective_seed, 3, fnv1a64(layer_name))
//
// Permutations use Fisher-Yates with modulo index draws, signs take the top
// bit of each output word, and normal deviates use the Box-Muller cosine
// branch on 53-bit uniforms in (0,1].

namespace randes {

inline constexpr int kPrngVersion = 1;

inline constexpr uint64_t kStreamPermutation = 1;
inline constexpr uint64_t kStreamSign = 2;
inline constexpr uint64_t kStreamDiagonal = 3;

// SplitMix64 output function applied to a single state value.
inline uint64_t mix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline uint64_t derive_stream_seed(uint64_t seed, uint64_t domain, uint64_t name_hash) {
    return mix64(mix64(seed + domain) ^ name_hash);
}

class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in (0, 1], 53 significant bits.
    double next_unit() {
        return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal deviate, Box-Muller cosine branch.
    double next_normal() {
        double u1 = next_unit();
        double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // +1 or -1 from the top bit of the next word.
    float next_sign() {
        return (next() >> 63) ? -1.0f : 1.0f;
    }

private:
    uint64_t state_;
};

// In-place Fisher-Yates shuffle.
template <typename T>
void fisher_yates(std::span<T> values, SplitMix64& rng) {
    if (values.size() < 2) return;
    for (size_t i = values.size() - 1; i > 0; --i) {
        size_t j = static_cast<size_t>(rng.next() % (i + 1));
        std::swap(values[i], values[j]);
    }
}

}  // namespace randes
