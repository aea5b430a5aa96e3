#pragma once

#include <cstdint>
#include <random>

namespace dabformer {

// Seeded generator with distribution code kept here (not in <random>) so
// streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  int64_t uniform_int(int64_t lo, int64_t hi);
  double normal();
  // Normal(0, std) resampled until |v| <= 2 std.
  double truncated_normal(double std);

  // Stateless stream derivation, e.g. one stream per (seed, sample index).
  static uint64_t mix(uint64_t a, uint64_t b);

 private:
  std::mt19937_64 engine_;
};

}  // namespace dabformer
