#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "scl/common.hpp"

namespace scl {

// Deterministic random source. mt19937_64 is bit-exact across platforms;
// the double conversions below are explicit so streams never depend on
// implementation-defined std::*_distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive, rejection-sampled (no modulo bias).
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    std::uint64_t range = hi - lo + 1;
    if (range == 0) return gen_();  // full range
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    std::uint64_t r;
    do {
      r = gen_();
    } while (r >= limit);
    return lo + r % range;
  }

  int index(int n) { return static_cast<int>(uniform_int(0, static_cast<std::uint64_t>(n - 1))); }

  // Standard normal via Box-Muller (cosine branch only; stream stays
  // position-independent of any cached state).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace scl
