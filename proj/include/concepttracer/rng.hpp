#pragma once

// Portable random streams. Everything here is bit-reproducible across
// compilers and standard libraries: std::mt19937_64 has a standardised output
// sequence, and the bounded/real/normal draws below avoid the
// implementation-defined std::*_distribution algorithms.

#include <cmath>
#include <cstdint>
#include <numeric>
#include <numbers>
#include <random>
#include <vector>

namespace concepttracer::rng {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of stream `index` derived from `master_seed`; a pure function of both.
constexpr std::uint64_t sub_seed(std::uint64_t master_seed, std::uint64_t index) noexcept {
  return mix64(master_seed + kGoldenGamma * (index + 1));
}

using Engine = std::mt19937_64;

/// Uniform integer in [0, n) by rejection; n must be >= 1.
inline std::uint64_t bounded(Engine& engine, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    const std::uint64_t r = engine();
    if (r >= threshold) return r % n;
  }
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

/// Standard normal draw (Box-Muller, one value per call; the pair's second
/// value is discarded so every call consumes exactly two engine outputs).
inline double standard_normal(Engine& engine) {
  double u1 = 0.0;
  do {
    u1 = uniform01(engine);
  } while (u1 <= 0.0);
  const double u2 = uniform01(engine);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Fisher-Yates shuffle of the identity permutation of size n.
inline std::vector<std::uint32_t> fisher_yates(Engine& engine, std::size_t n) {
  std::vector<std::uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::uint32_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(bounded(engine, i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

}  // namespace concepttracer::rng
