#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace rafa {

/// Deterministic generator: std::mt19937_64 (bit-exact by the standard)
/// with hand-written distributions so draws do not depend on the standard
/// library's implementation-defined distribution algorithms.
///
///  - uniform(a, b): a + (b - a) * u, u = (next() >> 11) * 2^-53 in [0, 1)
///  - normal(): Box-Muller on two uniforms, second value cached
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer in [0, n); n must be positive.
  std::size_t index(std::size_t n);
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Independent stream seed for one sample of one epoch.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t epoch, std::uint64_t index);

}  // namespace rafa
