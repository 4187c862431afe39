#pragma once

#include <cstdint>
#include <random>

namespace phhmm {

/// SplitMix64 finaliser, used to turn structured seeds (base ^ id) into
/// well-mixed engine seeds.
std::uint64_t mix_seed(std::uint64_t x);

/// Seedable generator whose output is identical on every platform: the
/// engine is std::mt19937_64 (fully specified by the standard) and all
/// variates are derived here rather than through <random> distributions,
/// whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  /// Uniform on the open interval (0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double exponential(double rate);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  int poisson(double mu);
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace phhmm
