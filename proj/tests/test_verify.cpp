#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "doctest.h"
#include "dynamarks/perturb.hpp"
#include "dynamarks/verify.hpp"
#include "support.hpp"

using namespace dynamarks;

namespace {

// JSD via the entropy identity H(M) - (H(P) + H(Q)) / 2, independent of the
// KL form used by the library.
double jsd_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  auto h = [](const std::vector<double>& d) {
    double s = 0.0;
    for (double x : d) {
      if (x > 0.0) s -= x * std::log2(x);
    }
    return s;
  };
  std::vector<double> m(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) m[k] = 0.5 * (p[k] + q[k]);
  return h(m) - 0.5 * (h(p) + h(q));
}

ResponseDistribution all_present(std::size_t n, std::vector<std::vector<double>> cells) {
  std::vector<std::optional<std::vector<double>>> opt(cells.begin(), cells.end());
  return ResponseDistribution(n, cells.front().size(), 0.0, std::move(opt));
}

PredictionFn constant(std::vector<double> v) {
  return [v](std::span<const double>) { return ProbabilityVector(v); };
}

// Deterministic model whose confidence depends on the input.
PredictionFn peaked_model() {
  return [](std::span<const double> x) {
    const double top = 0.8 + 0.19 * x[1];
    const std::size_t i = static_cast<std::size_t>(x[0]);
    std::vector<double> v(3, (1.0 - top) / 2.0);
    v[i] = top;
    return ProbabilityVector(v);
  };
}

std::vector<LabeledSample> verification_set(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledSample> out;
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t y = k % 3;
    out.push_back({{static_cast<double>(y), rng.uniform_open()}, ClassIndex{y}});
  }
  return out;
}

}  // namespace

TEST_CASE("build_response_matrix") {
  SUBCASE("single sample") {
    const std::vector<LabeledSample> set{{{0.0}, ClassIndex{0}}};
    const ResponseMatrix m = build_response_matrix(constant({0.8, 0.2}), set, 2);
    CHECK(m.cell(0, 0) == std::vector<double>{0.8});
    CHECK(m.cell(0, 1) == std::vector<double>{0.2});
    CHECK(m.cell(1, 0).empty());
    CHECK(m.cell(1, 1).empty());
  }
  SUBCASE("empty set") {
    const ResponseMatrix m = build_response_matrix(constant({0.8, 0.2}), {}, 2);
    for (std::size_t y = 0; y < 2; ++y) {
      for (std::size_t j = 0; j < 2; ++j) CHECK(m.cell(y, j).empty());
    }
  }
  SUBCASE("balanced counts") {
    const auto set = verification_set(300, 1);
    const ResponseMatrix m = build_response_matrix(peaked_model(), set, 3);
    CHECK(m.response_count() == 300);
    for (std::size_t y = 0; y < 3; ++y) {
      for (std::size_t j = 0; j < 3; ++j) CHECK(m.cell(y, j).size() == 100);
    }
  }
  SUBCASE("errors") {
    const std::vector<LabeledSample> bad_label{{{0.0}, ClassIndex{2}}};
    CHECK_THROWS_AS(build_response_matrix(constant({0.8, 0.2}), bad_label, 2),
                    std::invalid_argument);
    const std::vector<LabeledSample> ok{{{0.0}, ClassIndex{0}}};
    CHECK_THROWS_AS(build_response_matrix(constant({0.8, 0.1, 0.1}), ok, 2),
                    std::invalid_argument);
  }
}

TEST_CASE("histogram") {
  SUBCASE("repeated value") {
    const auto h = histogram(std::vector<double>{0.95, 0.95, 0.95}, 10, 0.0);
    for (std::size_t k = 0; k < 9; ++k) CHECK(h[k] == 0.0);
    CHECK(h[9] == 1.0);
  }
  SUBCASE("two points with smoothing") {
    const auto h = histogram(std::vector<double>{0.05, 0.95}, 10, 1e-9);
    CHECK(h[0] == doctest::Approx(0.5));
    CHECK(h[9] == doctest::Approx(0.5));
    for (double x : h) CHECK(x > 0.0);
    CHECK(testing::sum(h) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("one goes to the last bin, zero to the first") {
    const auto h = histogram(std::vector<double>{1.0, 0.0}, 4, 0.0);
    CHECK(h == std::vector<double>{0.5, 0.0, 0.0, 0.5});
  }
  SUBCASE("bad parameters") {
    CHECK_THROWS(histogram(std::vector<double>{0.5}, 1, 0.0));
    CHECK_THROWS(histogram(std::vector<double>{0.5}, 10, -1.0));
  }
  SUBCASE("random cells are normalized") {
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> vals(1 + rng.uniform_index(100));
      for (double& v : vals) v = rng.uniform_open();
      const auto h = histogram(vals, 50, 1e-9);
      REQUIRE(std::abs(testing::sum(h) - 1.0) <= 1e-9);
      for (double x : h) REQUIRE(x >= 0.0);
    }
  }
}

TEST_CASE("make_distribution marks empty cells absent") {
  ResponseMatrix m(2);
  m.append(ClassIndex{1}, std::vector<double>{0.3, 0.7});
  const ResponseDistribution d = make_distribution(m, 10, 1e-9);
  CHECK_FALSE(d.cell(0, 0).has_value());
  CHECK_FALSE(d.cell(0, 1).has_value());
  REQUIRE(d.cell(1, 0).has_value());
  CHECK((*d.cell(1, 0))[3] == doctest::Approx(1.0));
}

TEST_CASE("jsd closed forms") {
  CHECK(jsd(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}) == 1.0);
  const std::vector<double> p{0.5, 0.5}, q{1.0, 0.0};
  CHECK(jsd(p, q) == doctest::Approx(jsd_oracle(p, q)).epsilon(1e-12));
  CHECK(jsd(p, q) == doctest::Approx(0.3113).epsilon(1e-4));
  CHECK_THROWS(jsd(p, std::vector<double>{1.0, 0.0, 0.0}));
}

TEST_CASE("jsd identity, symmetry and range on random pmfs") {
  Rng rng(12);
  for (int t = 0; t < 5000; ++t) {
    const std::size_t b = 2 + rng.uniform_index(60);
    const auto p = testing::random_simplex(rng, b);
    const auto q = testing::random_simplex(rng, b);
    REQUIRE(jsd(p, p) <= 1e-12);
    REQUIRE(std::abs(jsd(p, q) - jsd(q, p)) <= 1e-12);
    const double d = jsd(p, q);
    REQUIRE(d >= 0.0);
    REQUIRE(d <= 1.0);
    REQUIRE(std::abs(d - jsd_oracle(p, q)) <= 1e-12);
  }
}

TEST_CASE("distance") {
  SUBCASE("self distance") {
    Rng rng(2);
    std::vector<std::vector<double>> cells;
    for (int k = 0; k < 9; ++k) cells.push_back(testing::random_simplex(rng, 8));
    const auto d = all_present(3, cells);
    const DistanceResult r = distance(d, d);
    CHECK(r.total == 0.0);
    CHECK(r.skipped == 0);
  }
  SUBCASE("all cells absent") {
    const ResponseDistribution d(4, 10, 0.0, std::vector<std::optional<std::vector<double>>>(16));
    const DistanceResult r = distance(d, d);
    CHECK(r.total == 0.0);
    CHECK(r.skipped == 16);
  }
  SUBCASE("two by two sums per-cell values") {
    const std::vector<std::vector<double>> a{{1.0, 0.0}, {0.5, 0.5}, {0.2, 0.8}, {0.9, 0.1}};
    const std::vector<std::vector<double>> b{{0.0, 1.0}, {1.0, 0.0}, {0.2, 0.8}, {0.4, 0.6}};
    double expect = 0.0;
    for (std::size_t k = 0; k < 4; ++k) expect += jsd_oracle(a[k], b[k]);
    const DistanceResult r = distance(all_present(2, a), all_present(2, b));
    CHECK(r.total == doctest::Approx(expect).epsilon(1e-12));
    CHECK(r.skipped == 0);
  }
  SUBCASE("absent cells are skipped") {
    std::vector<std::optional<std::vector<double>>> a(4, std::vector<double>{0.5, 0.5});
    std::vector<std::optional<std::vector<double>>> b(4, std::vector<double>{1.0, 0.0});
    b[3].reset();
    const DistanceResult r =
        distance(ResponseDistribution(2, 2, 0.0, a), ResponseDistribution(2, 2, 0.0, b));
    CHECK(r.skipped == 1);
    CHECK(r.total == doctest::Approx(3.0 * jsd_oracle({0.5, 0.5}, {1.0, 0.0})));
  }
  SUBCASE("shape mismatch") {
    const ResponseDistribution d2(2, 10, 0.0, std::vector<std::optional<std::vector<double>>>(4));
    const ResponseDistribution d3(3, 10, 0.0, std::vector<std::optional<std::vector<double>>>(9));
    CHECK_THROWS(distance(d2, d3));
  }
}

TEST_CASE("verify_watermark degenerate and symmetric cases") {
  const auto set = verification_set(300, 5);
  const SecretParameters s = generate_secrets(3, 2);
  const PredictionFn original = peaked_model();
  const PredictionFn altered = make_altered_api(original, s, 9);

  // Recorded responses so the "suspect = altered" comparison sees the same draws.
  std::vector<ProbabilityVector> recorded;
  for (const auto& smp : set) recorded.push_back(altered(smp.input));
  auto replay = [&recorded]() {
    auto idx = std::make_shared<std::size_t>(0);
    return PredictionFn([&recorded, idx](std::span<const double>) {
      return recorded[(*idx)++ % recorded.size()];
    });
  };

  SUBCASE("suspect is the altered model") {
    const auto r = verify_watermark(replay(), original, replay(), set, 3);
    CHECK(r.delta_alt_sm == 0.0);
    CHECK(r.delta_org_sm > 0.0);
    CHECK(r.detected);
    CHECK(std::isinf(r.eta));
    CHECK(r.status == VerificationStatus::degenerate_detected);
  }
  SUBCASE("suspect is the original model") {
    const auto r = verify_watermark(original, original, replay(), set, 3);
    CHECK(r.delta_org_sm == 0.0);
    CHECK(r.eta == 0.0);
    CHECK_FALSE(r.detected);
    CHECK(r.status == VerificationStatus::not_detected);
  }
  SUBCASE("identical models are inconclusive") {
    const auto r = verify_watermark(original, original, original, set, 3);
    CHECK(r.status == VerificationStatus::inconclusive);
    CHECK_FALSE(r.detected);
  }
  SUBCASE("precondition failures") {
    CHECK_THROWS(verify_watermark(original, original, altered, {}, 3));
    VerifyOptions o;
    o.tau = 0.0;
    CHECK_THROWS(verify_watermark(original, original, altered, set, 3, o));
  }
}

TEST_CASE("detected iff eta exceeds tau") {
  const auto set = verification_set(300, 6);
  const SecretParameters s = generate_secrets(3, 2);
  const PredictionFn original = peaked_model();
  // A suspect halfway between original and altered behaviour.
  const PredictionFn suspect = make_altered_api(original, s, 1);
  const PredictionFn altered = make_altered_api(original, s, 2);
  for (double tau : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    VerifyOptions o;
    o.tau = tau;
    const auto r = verify_watermark(suspect, original, altered, set, 3, o);
    CHECK(r.detected == (r.eta > tau));
    CHECK(r.eta == doctest::Approx(r.delta_org_sm / r.delta_alt_sm));
    CHECK(r.tau == tau);
  }
}

TEST_CASE("report is invariant under permutation of the verification set") {
  const SecretParameters s = generate_secrets(3, 2);
  const PredictionFn original = peaked_model();
  // Input-keyed alteration so each sample gets the same response in any order.
  const PredictionFn keyed = [&](std::span<const double> x) {
    Rng rng(static_cast<std::uint64_t>(x[1] * 1e12));
    return alter_response(original(x), s, rng).probs;
  };
  const PredictionFn suspect = [&](std::span<const double> x) {
    Rng rng(static_cast<std::uint64_t>(x[1] * 1e12) + 1);
    return alter_response(original(x), s, rng).probs;
  };
  auto set = verification_set(300, 8);
  const auto base = verify_watermark(suspect, original, keyed, set, 3);
  Rng rng(4);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(set.begin(), set.end(), rng);
    const auto r = verify_watermark(suspect, original, keyed, set, 3);
    CHECK(r.delta_org_sm == base.delta_org_sm);
    CHECK(r.delta_alt_sm == base.delta_alt_sm);
    CHECK(r.eta == base.eta);
  }
}

TEST_CASE("cells missing from one matrix are skipped from both sums") {
  ResponseMatrix sm(2), org(2), alt(2);
  sm.append(ClassIndex{0}, std::vector<double>{0.9, 0.1});
  org.append(ClassIndex{0}, std::vector<double>{0.95, 0.05});
  alt.append(ClassIndex{0}, std::vector<double>{0.85, 0.15});
  org.append(ClassIndex{1}, std::vector<double>{0.1, 0.9});
  const auto r = verify_matrices(sm, org, alt);
  CHECK(r.skipped_cells == 2);
}
