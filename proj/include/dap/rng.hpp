#pragma once

// Deterministic random streams. Distributions are hand-rolled on top of
// mt19937_64 so generated bytes do not depend on the standard library's
// distribution implementations.

#include <cmath>
#include <cstdint>
#include <random>

namespace dap {

class Rng {
public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1)
  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) { // inclusive bounds
    return lo + int(gen_() % uint64_t(hi - lo + 1));
  }

  // Box-Muller; one fresh pair per call, second value discarded to keep the
  // stream position independent of call history.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) {
    return mean + stddev * normal();
  }

  // Stream derivation for per-sample / per-epoch reproducibility.
  static uint64_t derive(uint64_t seed, uint64_t a, uint64_t b = 0) {
    uint64_t x = seed ^ (a * 0x9e3779b97f4a7c15ULL) ^
                 (b * 0xbf58476d1ce4e5b9ULL) ^ 0x94d049bb133111ebULL;
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
  }

private:
  std::mt19937_64 gen_;
};

} // namespace dap
