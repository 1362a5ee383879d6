#pragma once

#include <cstdint>
#include <string>

namespace acnet {

// Deterministic, splittable random generator (xoshiro256++ core seeded via
// splitmix64). All sampling algorithms are spelled out here so streams are
// byte-stable across platforms and standard-library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Independent child stream derived from this stream's seed and a label.
  Rng split(const std::string& label) const;
  Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);  // [lo, hi] inclusive
  double normal(double mean = 0.0, double stddev = 1.0);       // Box-Muller
  bool bernoulli(double p);

 private:
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
  std::uint64_t seed_ = 0;
};

}  // namespace acnet
