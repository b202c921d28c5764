#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dpsq {

// Stateless mixer used to derive independent sub-seeds from one session seed.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

// mt19937_64 plus hand-rolled distributions. std::*_distribution output is
// not pinned by the standard, and every artifact here must be byte-stable
// across toolchains, so only the raw engine is taken from the library.
class SessionRng {
 public:
  explicit SessionRng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // [0, 1), 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, m). m == 0 is a caller bug.
  uint64_t below(uint64_t m) {
    const uint64_t limit = m * (~uint64_t{0} / m);
    for (;;) {
      uint64_t r = eng_();
      if (r < limit || limit == 0) return r % m;
    }
  }

  bool bit() { return (eng_() >> 63) != 0; }

  // Box-Muller, no spare caching: exactly two engine draws per call.
  double normal(double mean, double sigma) {
    double u1 = 1.0 - uniform01();  // (0, 1]
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(2.0 * M_PI * u2);
  }

  // Rejection-sampled N(0, sigma) restricted to [-bound, bound].
  double truncated_normal(double sigma, double bound) {
    if (sigma <= 0.0) return 0.0;
    for (;;) {
      double x = normal(0.0, sigma);
      if (x >= -bound && x <= bound) return x;
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace dpsq
