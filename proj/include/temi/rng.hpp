#pragma once

#include <cstdint>
#include <random>

namespace temi {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent child seeds from one master seed.
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Child seed for stream `stream` of `master`. Distinct streams give unrelated sequences.
[[nodiscard]] constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    return mix_seed(mix_seed(master) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

// Stream tags for the pieces of a run that draw randomness.
namespace streams {
inline constexpr std::uint64_t synth_centroids = 1;
inline constexpr std::uint64_t synth_noise = 2;
inline constexpr std::uint64_t synth_stretch = 3;
inline constexpr std::uint64_t head_init = 100;
inline constexpr std::uint64_t shuffle = 200;
inline constexpr std::uint64_t pairs = 201;
inline constexpr std::uint64_t kmeans = 300;
inline constexpr std::uint64_t probe = 400;
inline constexpr std::uint64_t theorem = 500;
} // namespace streams

} // namespace temi
