#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "protonlu/error.hpp"

namespace protonlu::rng {

// All sampling goes through these helpers instead of <random> distributions.
// The mt19937_64 engine is specified bit-for-bit by the standard; the
// distributions are not, so rolling the mapping ourselves keeps seeded runs
// reproducible across standard libraries.

using Engine = std::mt19937_64;

// Uniform double in [0, 1) with 53 bits of precision.
inline double uniform_real(Engine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform double in [lo, hi).
inline double uniform_real(Engine& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_real(rng);
}

// Uniform integer in [0, n). Rejection sampling, unbiased.
inline std::size_t uniform_index(Engine& rng, std::size_t n) {
  if (n == 0) throw Error("uniform_index: empty range");
  const std::uint64_t bound = n;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

inline bool bernoulli(Engine& rng, double p) { return uniform_real(rng) < p; }

// Fisher-Yates; deterministic given the engine state.
template <typename T>
void shuffle(std::vector<T>& items, Engine& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

// k distinct indices from [0, n), in sampled order. Requires k <= n.
inline std::vector<std::size_t> sample_without_replacement(Engine& rng,
                                                           std::size_t n,
                                                           std::size_t k) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, n - i)]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace protonlu::rng
