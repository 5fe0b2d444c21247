#pragma once

#include <cstdint>
#include <random>

namespace cr2 {

// Seeded PRNG with platform-independent variate generation.
// The std distributions are implementation-defined, so uniform/normal/exponential
// are derived here directly from the 64-bit Mersenne Twister output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for (seed, tag, index); used to give every query and
  // every pipeline stage its own reproducible substream.
  static Rng substream(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  double exponential(double mean = 1.0);
  double lognormal(double log_median, double sigma);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace cr2
