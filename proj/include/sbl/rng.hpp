#pragma once

#include <cstdint>

namespace sbl {

// Counter-based splitmix64 stream. Unlike the std <random> distributions this
// is bit-stable across platforms and compilers, which the reproducibility
// contract requires: identical seed + call sequence => identical outputs.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : seed_(seed), counter_(0) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

  uint64_t next_u64() {
    uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  uint64_t next_below(uint64_t n) {
    if (n == 0) return 0;
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
    return lo + static_cast<int64_t>(next_below(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Derives an independent stream; children with different ids never collide
  // regardless of how much the parent has been consumed.
  Rng split(uint64_t stream_id) const {
    uint64_t z = seed_ ^ (0xD1B54A32D192ED03ULL + stream_id * 0x632BE59BD9B4E019ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace sbl
