#pragma once

#include <cstdint>
#include <string>

namespace rcn {

// SplitMix64-based generator. Counter-style state makes it cheap to fork an
// independent stream per component (datasets, parameter init, shuffling), so
// a run is bit-reproducible from a single root seed regardless of how many
// draws each consumer makes.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0, n), n > 0
  std::uint64_t uniform_int(std::uint64_t n);

  // standard normal via Box-Muller; draws exactly two uniforms per call
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  // Fork an independent stream. The child depends only on the parent's
  // current state and the stream id, never on future parent draws.
  Rng split(std::uint64_t stream) const;
  Rng split(const std::string& label) const;

 private:
  std::uint64_t state_;
};

}  // namespace rcn
