#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace dynamarks {

// Seedable, splittable generator shared by every stochastic operation.
//
// Backed by std::mt19937_64, whose output sequence is fixed by the standard.
// All derived variates (uniform, categorical, normal) are computed here rather
// than through <random> distributions, so a given seed yields the same stream
// on every standard library.
//
// A generator is not thread-safe. Concurrent consumers each take their own
// stream via split().
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed);

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return next_u64(); }

  std::uint64_t next_u64();

  // Uniform on the open interval (0, 1).
  double uniform_open();
  // Uniform on the open interval (lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be > 0.
  std::size_t uniform_index(std::size_t n);
  // Index drawn with probability proportional to weights[k].
  std::size_t categorical(std::span<const double> weights);
  // Standard normal (Box-Muller).
  double normal();

  // Child generator whose stream is decorrelated from this one. Advances this
  // generator by one draw.
  Rng split();

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive well-mixed seeds from small integers.
std::uint64_t mix_seed(std::uint64_t x);

// Seed for the k-th independent sub-stream of a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k);

}  // namespace dynamarks
