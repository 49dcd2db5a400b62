#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fcnet {

/// Counter-based generator: output k of stream (seed, index, stream) is a
/// splitmix64 hash of the key and k, so any scene or run can be regenerated
/// without replaying the ones before it. Only integer arithmetic feeds
/// uniform(), which keeps generated geometry identical across platforms.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t index = 0, std::uint64_t stream = 0)
      : key_(mix(mix(seed ^ 0x6A09E667F3BCC908ULL) ^ (index * 0xBB67AE8584CAA73BULL)) ^
             (stream * 0x3C6EF372FE94F82BULL)) {}

  std::uint64_t next() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  /// Uniform in [0, 1) with 53 bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal (Box-Muller).
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Zero-mean, unit-variance noise from four uniforms (Irwin-Hall). Plain
  /// arithmetic, so rendered images do not depend on libm.
  double noise() {
    const double s = uniform() + uniform() + uniform() + uniform();
    return (s - 2.0) * 1.7320508075688772;
  }

  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace fcnet
