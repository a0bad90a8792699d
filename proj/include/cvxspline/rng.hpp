#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cvxspline {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based stream: draw i is a pure function of (key, i), so any
/// partition of the work across threads reproduces the same numbers.
class CounterStream {
 public:
  explicit CounterStream(std::uint64_t key) : key_(splitmix64(key)) {}

  /// Key derived from several stream coordinates, e.g. (seed, n, replicate).
  static CounterStream keyed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    return CounterStream(splitmix64(splitmix64(splitmix64(a) ^ b) ^ c));
  }

  std::uint64_t bits(std::uint64_t counter) const { return splitmix64(key_ ^ splitmix64(counter)); }

  /// Uniform in (0,1).
  double uniform(std::uint64_t counter) const {
    return (static_cast<double>(bits(counter) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal by Box–Muller on draws (2i, 2i+1).
  double normal(std::uint64_t i) const {
    const double u1 = uniform(2 * i);
    const double u2 = uniform(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli_half(std::uint64_t counter) const { return (bits(counter) >> 63) != 0; }

 private:
  std::uint64_t key_;
};

}  // namespace cvxspline
