#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sep {

// All randomness in the project flows from one 64-bit master seed through
// named sub-streams. Stream derivation hashes the (seed, name) pair, so a
// stage can hand out independent per-purpose and per-item streams without
// coordinating counters. Sampling avoids std:: distributions, whose output
// is implementation-defined; every draw here is reproducible across
// platforms for a given libstdc++/libc++ because mt19937_64 itself is
// specified by the standard.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Derives the seed for a named sub-stream of `seed`.
  static uint64_t derive(uint64_t seed, const std::string& name);
  static uint64_t derive(uint64_t seed, const std::string& name, uint64_t index);

  static Rng substream(uint64_t seed, const std::string& name) { return Rng(derive(seed, name)); }
  static Rng substream(uint64_t seed, const std::string& name, uint64_t index) {
    return Rng(derive(seed, name, index));
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform integer in [0, bound), bound >= 1. Rejection sampling keeps the
  // draw unbiased.
  uint64_t uniform_index(uint64_t bound);

  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);

  // Uniform real in [0, 1) with 53 random bits.
  double uniform();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // log-uniform over [lo, hi], lo > 0.
  double log_uniform(double lo, double hi);

  // Standard normal via Box-Muller (deterministic, no cached spare).
  double normal();

  double lognormal(double mu, double sigma);

  // Bernoulli draw with probability p.
  bool bernoulli(double p) { return uniform() < p; }

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn from [0, n) without replacement, in draw order.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace sep
