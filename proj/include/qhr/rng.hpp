#pragma once

#include <cmath>
#include <cstdint>

namespace qhr {

// Deterministic, platform-independent random source.
//
// Generator: SplitMix64 (Steele, Lea, Flood 2014). The state advances by the
// golden-ratio increment and each output is a finalizer hash of the state, so
// the stream is a pure function of (seed, draw index) and reproduces bit-for-bit
// on any conforming platform.
//
// Uniforms map the top 53 bits to the open interval (0,1); Gaussians use the
// Box-Muller transform on consecutive uniform pairs. Both transforms are fixed
// here so seeded runs reproduce across compilers and standard libraries
// (std::normal_distribution is implementation-defined and is deliberately
// not used).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  // Uniform on the open interval (0,1): ((top 53 bits) + 0.5) * 2^-53.
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; the cosine/sine pair is consumed in order.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // Derives an independent stream for a (run, cell) pair from a master seed.
  // Each component passes through the SplitMix64 finalizer, so streams for
  // distinct tuples are decorrelated.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0) {
    std::uint64_t h = mix64(seed + 0x9E3779B97F4A7C15ULL);
    h = mix64(h ^ (a + 0xBF58476D1CE4E5B9ULL));
    h = mix64(h ^ (b + 0x94D049BB133111EBULL));
    return h;
  }

 private:
  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace qhr
