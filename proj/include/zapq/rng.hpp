#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>

namespace zapq {

/// Counter-based generator (SplitMix64). The k-th output is a pure function
/// of (seed, k), so streams with different seeds never share state and the
/// sequence is identical on every platform.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

  /// Standard normal via Box-Muller (no cached second variate).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Inverse-CDF draw from a probability vector. Mass lost to rounding at
  /// the top end goes to the last index with positive weight.
  /// Works on anything indexable with size(), including Eigen row expressions.
  template <typename Pmf>
  std::size_t categorical(const Pmf& pmf) {
    const double u = uniform();
    double acc = 0.0;
    std::size_t last = 0;
    const auto n = static_cast<std::size_t>(pmf.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (pmf[i] <= 0.0) continue;
      last = i;
      acc += pmf[i];
      if (u < acc) return i;
    }
    return last;
  }

 private:
  std::uint64_t state_;
};

/// Seed for an independent sub-stream (chain, initialization, evaluation)
/// of a run seeded with `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng mix(seed ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
  return mix();
}

}  // namespace zapq
