#pragma once

#include <cstdint>
#include <random>

namespace qbsde {

/// Seeded generator with platform-independent uniform draws
/// (std::uniform_real_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return eng_() % n; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace qbsde
