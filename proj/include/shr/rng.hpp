// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <span>
#include <utility>

namespace shr {

/// Counter-based generator: the n-th draw is a pure function of (key, n), so
/// sub-streams derived with `fork` never overlap and reproduce bit-for-bit on
/// any platform. Distributions are implemented here rather than taken from
/// <random>, whose algorithms are implementation-defined.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(mix(key)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  /// SplitMix64 finalizer.
  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Independent child stream addressed by a path of integers.
  constexpr CounterRng fork(std::initializer_list<std::uint64_t> path) const noexcept {
    std::uint64_t k = key_;
    for (std::uint64_t p : path) {
      k = mix(k ^ mix(p + 0x632BE59BD9B4E019ULL));
    }
    CounterRng child(0);
    child.key_ = k;
    return child;
  }

  constexpr result_type operator()() noexcept { return next_u64(); }

  constexpr std::uint64_t next_u64() noexcept {
    return mix(key_ ^ mix(counter_++));
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t x = next_u64();
    while (x >= limit) {
      x = next_u64();
    }
    return x % n;
  }

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal() noexcept {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) {
      u1 = 0x1.0p-53;
    }
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Poisson sample. Knuth's product method below 30, rounded normal
  /// approximation above.
  long poisson(double lambda) noexcept {
    if (lambda <= 0.0) {
      return 0;
    }
    if (lambda < 30.0) {
      const double limit = std::exp(-lambda);
      long k = 0;
      double p = uniform();
      while (p > limit) {
        ++k;
        p *= uniform();
      }
      return k;
    }
    const double x = std::round(lambda + std::sqrt(lambda) * normal());
    return x < 0.0 ? 0 : static_cast<long>(x);
  }

  template <class T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace shr
