#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace hashtag {

// SplitMix64 finalizer (Steele, Lea, Flood 2014). Constants:
//   increment 0x9E3779B97F4A7C15
//   mix       (z ^ z>>30) * 0xBF58476D1CE4E5B9
//             (z ^ z>>27) * 0x94D049BB133111EB
//             z ^ z>>31
// Every seeded structure in the project (hash tables, orderings, datasets,
// initializations, attack batches) is driven by this generator so that
// outputs are reproducible bit-for-bit across platforms.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class SplitMix64 {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    state_ += kGamma;
    return mix64(state_);
  }

  // Uniform integer in [0, bound). Plain modulo reduction; the bias is below
  // 2^-55 for every bound used here and keeps the definition portable.
  constexpr std::uint64_t below(std::uint64_t bound) noexcept {
    return next() % bound;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller (cosine branch only, no cached pair).
  double normal() noexcept {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace hashtag
