#pragma once

#include <cstdint>
#include <random>

namespace mtt {

// Deterministic helpers on top of std::mt19937_64. std::uniform_real_distribution
// is implementation-defined, so every draw that feeds reproducible output goes
// through these instead.

// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi).
inline double uniform_range(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(g);
}

// Uniform integer in [0, n). n must be positive.
inline std::uint64_t uniform_index(std::mt19937_64& g, std::uint64_t n) {
  // Rejection-free modulo is biased for huge n; all our n are tiny, but do the
  // standard rejection anyway so the helper is safe to reuse.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
  std::uint64_t x = g();
  while (x > limit) x = g();
  return x % n;
}

}  // namespace mtt
