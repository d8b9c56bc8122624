#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace quiz {

// Deterministic RNG used everywhere randomness is needed. Wraps the
// standardized mt19937_64 stream but derives all values through the
// fixed algorithms below, so results are bit-reproducible across
// platforms and standard library versions (std::uniform_* make no such
// guarantee).
class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [lo, hi] inclusive, by rejection.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = uint64_t(hi - lo) + 1;
    uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return lo + int64_t(v % span);
  }

  // Box-Muller; consumes two uniforms per pair of normals.
  double normal(double mean = 0.0, double sigma = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + sigma * spare_;
    }
    double u1, u2;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mean + sigma * r * std::cos(2.0 * M_PI * u2);
  }

  // Truncated at two sigma, used for transformer weight init.
  double truncated_normal(double sigma) {
    double v;
    do {
      v = normal(0.0, sigma);
    } while (std::abs(v) > 2.0 * sigma);
    return v;
  }

private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace quiz
