#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace lobit {

// Deterministic 64-bit generator: splitmix64 state mixer, Box-Muller for
// Gaussian draws. Same seed yields the same stream everywhere; never share
// one instance across threads.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 mantissa bits.
  double next_unit() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in 0..n-1 via the multiply-shift reduction.
  uint32_t next_below(uint32_t n) {
    return uint32_t((unsigned __int128)(next_u64()) * n >> 64);
  }

  // Standard normal. Box-Muller on the mixer stream; the cosine half is
  // returned first, the sine half on the following call.
  double next_gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = double((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = next_unit();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace lobit
