#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

#include "cauvis/numerics/matrix.hpp"

namespace cauvis {

// Counter-based generator: draw i of stream s under seed k is
// splitmix64(key(k, s) + i·γ). Any draw can be reproduced from (seed, stream,
// counter) alone, independently of platform and of how many other streams
// were consumed.
class CounterRng {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // FNV-1a, used to derive stream ids from readable names.
  static constexpr std::uint64_t hash(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ULL;
    }
    return h;
  }

  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_(mix(seed ^ mix(stream + kGamma))) {}

  CounterRng(std::uint64_t seed, std::string_view stream) noexcept
      : CounterRng(seed, hash(stream)) {}

  std::uint64_t next_u64() noexcept { return mix(key_ + (++counter_) * kGamma); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t below(std::uint64_t n) noexcept { return n ? next_u64() % n : 0; }

  // Box-Muller; one normal per call keeps the counter→value map simple.
  double normal(double mean = 0.0, double stddev = 1.0) noexcept {
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline Matrix random_normal(std::size_t rows, std::size_t cols, CounterRng& rng,
                            double stddev = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, stddev);
  return m;
}

inline Matrix random_uniform(std::size_t rows, std::size_t cols, CounterRng& rng, double lo = -1.0,
                             double hi = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

}  // namespace cauvis
