#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "dynamarks/perturb.hpp"
#include "support.hpp"

using namespace dynamarks;

namespace {

bool bitwise_equal(const ProbabilityVector& x, const ProbabilityVector& y) {
  return x.size() == y.size() &&
         std::memcmp(x.values().data(), y.values().data(), x.size() * sizeof(double)) == 0;
}

// Two-sided Kolmogorov-Smirnov statistic of `xs` against U(lo, hi).
double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double f = (xs[k] - lo) / (hi - lo);
    d = std::max({d, f - static_cast<double>(k) / n, static_cast<double>(k + 1) / n - f});
  }
  return d;
}

}  // namespace

TEST_CASE("transfer moves the drawn mass between the chosen pair") {
  const ProbabilityVector p({0.95, 0.02, 0.03});
  const ProbabilityVector q = transfer_mass(p, ClassIndex{0}, ClassIndex{1}, 0.10);
  CHECK(q[0] == doctest::Approx(0.85).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(0.12).epsilon(1e-12));
  CHECK(q[2] == 0.03);
}

TEST_CASE("applied perturbation matches its record") {
  const SecretParameters s = generate_secrets(3, 1);
  Rng rng(5);
  const ProbabilityVector p({0.95, 0.02, 0.03});
  for (int k = 0; k < 1000; ++k) {
    const AlteredResponse r = alter_response(p, s, rng);
    REQUIRE(r.record.applied);
    REQUIRE(r.record.source.value == 0);
    REQUIRE(r.record.delta > 0.01);
    REQUIRE(r.record.delta < 0.19);
    const ProbabilityVector expect =
        transfer_mass(p, r.record.source, r.record.target, r.record.delta);
    REQUIRE(bitwise_equal(r.probs, expect));
  }
}

TEST_CASE("no-op outside the window") {
  const SecretParameters s = generate_secrets(3, 1);
  Rng rng(5);
  for (const auto& v : {std::vector<double>{0.60, 0.25, 0.15}, std::vector<double>{1.0, 0.0, 0.0},
                        std::vector<double>{0.9, 0.05, 0.05}, std::vector<double>{0.2, 0.3, 0.5}}) {
    const ProbabilityVector p(v);
    const AlteredResponse r = alter_response(p, s, rng);
    CHECK_FALSE(r.record.applied);
    CHECK(r.record.delta == 0.0);
    CHECK(r.record.source == argmax(p));
    CHECK(r.record.target == argmax(p));
    CHECK(bitwise_equal(r.probs, p));
  }
}

TEST_CASE("random inputs below the window are returned bitwise unchanged") {
  const SecretParameters s = generate_secrets(5, 2);
  Rng rng(17);
  for (int t = 0; t < 20000; ++t) {
    const ProbabilityVector p(testing::random_peaked(rng, 5, 0.2, 0.9));
    const AlteredResponse r = alter_response(p, s, rng);
    REQUIRE_FALSE(r.record.applied);
    REQUIRE(bitwise_equal(r.probs, p));
  }
}

TEST_CASE("simplex preservation and argmax invariance on 1e5 inputs") {
  Rng rng(2024);
  const SecretParameters s = generate_secrets(10, 99);
  std::size_t violations = 0;
  std::size_t applied = 0;
  for (int t = 0; t < 100000; ++t) {
    const std::size_t n = 10;
    // Half the inputs peak inside the window, half are arbitrary.
    const auto v = (t % 2 == 0) ? testing::random_peaked(rng, n, 0.9, 1.0)
                                : testing::random_simplex(rng, n);
    const ProbabilityVector p(v);
    const AlteredResponse r = alter_response(p, s, rng);
    applied += r.record.applied;
    bool bad = std::abs(r.probs.sum() - p.sum()) > 1e-12;
    for (double x : r.probs.values()) bad = bad || x < 0.0 || x > 1.0;
    bad = bad || !(argmax(r.probs) == argmax(p));
    violations += bad;
  }
  CHECK(violations == 0);
  CHECK(applied > 45000);
}

TEST_CASE("Monte-Carlo mean and target frequencies") {
  const SecretParameters s = generate_secrets(2, 3);
  const ProbabilityVector p({0.95, 0.05});
  Rng rng(77);
  const int trials = 100000;
  double delta_sum = 0.0;
  std::vector<double> counts(2, 0.0);
  std::vector<double> deltas;
  for (int t = 0; t < trials; ++t) {
    const AlteredResponse r = alter_response(p, s, rng);
    REQUIRE(r.record.applied);
    delta_sum += r.record.delta;
    deltas.push_back(r.record.delta);
    counts[r.record.target.value] += 1.0;
  }
  CHECK(std::abs(delta_sum / trials - 0.10) <= 0.002);

  const auto& v0 = s.per_class[0].v;
  for (std::size_t j = 0; j < 2; ++j) {
    const double freq = counts[j] / trials;
    const double se = std::sqrt(v0[j] * (1.0 - v0[j]) / trials);
    CHECK(std::abs(freq - v0[j]) <= 0.01);
    CHECK(std::abs(freq - v0[j]) <= 3.0 * se);
  }

  // Critical value at significance 0.01 for large n.
  const double d = ks_uniform(deltas, 0.01, 0.19);
  CHECK(d < 1.628 / std::sqrt(static_cast<double>(trials)));
}

TEST_CASE("target frequencies over ten classes") {
  const SecretParameters s = generate_secrets(10, 4);
  const ProbabilityVector p({0.93, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.0, 0.0, 0.01});
  Rng rng(8);
  const int trials = 100000;
  std::vector<double> counts(10, 0.0);
  for (int t = 0; t < trials; ++t) counts[alter_response(p, s, rng).record.target.value] += 1.0;
  for (std::size_t j = 0; j < 10; ++j) {
    const double q = s.per_class[0].v[j];
    const double se = std::sqrt(q * (1.0 - q) / trials);
    CHECK(std::abs(counts[j] / trials - q) <= 3.0 * se);
  }
}

TEST_CASE("dimension mismatch and invalid secrets are rejected") {
  Rng rng(1);
  const SecretParameters s = generate_secrets(3, 1);
  CHECK_THROWS_AS(alter_response(ProbabilityVector({0.95, 0.05}), s, rng), std::invalid_argument);
  SecretParameters bad = s;
  bad.per_class[0].b = 0.95;
  CHECK_THROWS_AS(alter_response(ProbabilityVector({0.95, 0.02, 0.03}), bad, rng),
                  std::invalid_argument);
}

TEST_CASE("alter_batch") {
  const SecretParameters s = generate_secrets(3, 1);
  SUBCASE("empty input") {
    Rng rng(1);
    CHECK(alter_batch({}, s, rng).empty());
  }
  SUBCASE("independent draws and determinism") {
    const std::vector<ProbabilityVector> batch(3, ProbabilityVector({0.95, 0.02, 0.03}));
    Rng r1(10), r2(10);
    const auto out1 = alter_batch(batch, s, r1);
    const auto out2 = alter_batch(batch, s, r2);
    REQUIRE(out1.size() == 3);
    CHECK(out1[0].record.delta != out1[1].record.delta);
    CHECK(out1[1].record.delta != out1[2].record.delta);
    for (std::size_t k = 0; k < 3; ++k) CHECK(bitwise_equal(out1[k].probs, out2[k].probs));
  }
  SUBCASE("mixed dimensions fail") {
    Rng rng(1);
    const std::vector<ProbabilityVector> batch{ProbabilityVector({0.95, 0.02, 0.03}),
                                               ProbabilityVector({0.5, 0.5})};
    CHECK_THROWS_AS(alter_batch(batch, s, rng), std::invalid_argument);
  }
}

TEST_CASE("perturbation cost is linear in the class count") {
  Rng rng(3);
  for (std::size_t n : {2u, 10u, 100u, 1000u}) {
    const SecretParameters s = generate_secrets(n, 1);
    std::vector<double> v(n, 0.05 / static_cast<double>(n - 1));
    v[0] = 0.95;
    const AlteredResponse r = alter_response(ProbabilityVector(v), s, rng);
    CHECK(r.record.component_ops <= 2 * n + 2);
  }
}

TEST_CASE("expected response oracle") {
  const SecretParameters s = generate_secrets(3, 1);
  const ProbabilityVector p({0.95, 0.02, 0.03});
  const auto e = expected_altered_response(p, s);
  // Independent evaluation: mean shift (a+b)/2 split across targets by V_0.
  const double m = 0.5 * (0.01 + 0.19);
  const auto& v = s.per_class[0].v;
  CHECK(e[0] == doctest::Approx(0.95 - m + m * v[0]).epsilon(1e-12));
  CHECK(e[1] == doctest::Approx(0.02 + m * v[1]).epsilon(1e-12));
  CHECK(e[2] == doctest::Approx(0.03 + m * v[2]).epsilon(1e-12));
  const ProbabilityVector outside({0.6, 0.3, 0.1});
  CHECK(expected_altered_response(outside, s) == outside.components());
}

TEST_CASE("altered api is reproducible per seed") {
  const SecretParameters s = generate_secrets(3, 1);
  const PredictionFn fixed = [](std::span<const double>) {
    return ProbabilityVector({0.95, 0.02, 0.03});
  };
  const PredictionFn a1 = make_altered_api(fixed, s, 4);
  const PredictionFn a2 = make_altered_api(fixed, s, 4);
  const std::vector<double> x{0.0};
  for (int k = 0; k < 50; ++k) CHECK(bitwise_equal(a1(x), a2(x)));
}
