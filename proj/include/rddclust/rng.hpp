#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace rddclust {

//! SplitMix64 step; used to scramble user seeds and derive substream seeds.
std::uint64_t splitmix64(std::uint64_t& state);

//! Derives an independent stream seed from (master, replicate, purpose).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate,
                          std::uint64_t purpose);

// Deterministic random source. All samplers are implemented explicitly so
// that a given seed yields the same stream on every platform/compiler; the
// std:: distribution wrappers make no such promise.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t raw() { return engine_(); }

  //! Uniform on [0, 1).
  double uniform();
  //! Uniform on (0, 1].
  double uniform_pos();
  double uniform(double lo, double hi);
  //! Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  //! Standard normal (Marsaglia polar, one value cached).
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

  double exponential() { return -std::log(uniform_pos()); }

  //! Gamma(shape, rate) via Marsaglia–Tsang; shape boost for shape < 1.
  double gamma(double shape, double rate);
  double beta(double a, double b);
  double chi_squared(double df) { return gamma(0.5 * df, 0.5); }

  //! Dirichlet draw; out.size() == alpha.size(), sums to 1.
  void dirichlet(std::span<const double> alpha, std::span<double> out);

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace rddclust
