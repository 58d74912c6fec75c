#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "dynamarks/core.hpp"
#include "dynamarks/rng.hpp"

namespace testing {

// Uniform point on the simplex (normalized exponentials).
inline std::vector<double> random_simplex(dynamarks::Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  double s = 0.0;
  for (auto& x : v) {
    x = -std::log(rng.uniform_open());
    s += x;
  }
  for (auto& x : v) x /= s;
  return v;
}

// Simplex point whose largest component lies in (lo, hi).
inline std::vector<double> random_peaked(dynamarks::Rng& rng, std::size_t n, double lo,
                                         double hi) {
  const double top = rng.uniform(lo, hi);
  std::vector<double> rest = random_simplex(rng, n - 1);
  std::vector<double> v;
  const std::size_t at = rng.uniform_index(n);
  for (std::size_t k = 0, r = 0; k < n; ++k) {
    v.push_back(k == at ? top : rest[r++] * (1.0 - top));
  }
  return v;
}

inline double sum(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace testing
