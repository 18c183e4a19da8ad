// Deterministic random streams (xoshiro256++ seeded via splitmix64).
// Distributions are implemented here so byte-level reproducibility does not
// depend on the standard library's unspecified algorithms.
#pragma once

#include <cstdint>
#include <vector>

namespace dtrm {

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  int uniform_int(int n);                 // {0, ..., n-1}
  double normal();                        // standard normal (Box-Muller)
  double normal(double mean, double stddev);

  // Independent stream derived from (this seed, stream index).
  Rng derive(std::uint64_t stream) const;

 private:
  std::uint64_t s_[4];
  std::uint64_t seed_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace dtrm
