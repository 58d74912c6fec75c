#include "dynamarks/perturb.hpp"

#include <memory>
#include <stdexcept>
#include <string>

namespace dynamarks {

namespace {

bool in_window(double top, const ClassSecrets& cs) { return top > cs.alpha && top < cs.beta; }

}  // namespace

Perturber::Perturber(SecretParameters params) : params_(std::move(params)) {
  if (auto check = validate_secrets(params_); !check.ok()) {
    throw std::invalid_argument("invalid secret parameters: " + check.message());
  }
}

AlteredResponse Perturber::alter(const ProbabilityVector& p, Rng& rng) const {
  const std::size_t n = params_.n_classes;
  if (p.size() != n) {
    throw std::invalid_argument("response has " + std::to_string(p.size()) +
                                " components, secrets expect " + std::to_string(n));
  }

  PerturbationRecord rec;
  const ClassIndex i = argmax(p);
  rec.source = i;
  rec.target = i;
  rec.component_ops = n;

  const ClassSecrets& cs = params_.per_class[i.value];
  if (!in_window(p[i.value], cs)) return {p, rec};

  const double delta = rng.uniform(cs.a, cs.b);
  const std::size_t j = rng.categorical(cs.v);
  rec.component_ops += n;

  rec.component_ops += 2;
  rec.applied = true;
  rec.delta = delta;
  rec.target = ClassIndex{j};
  return {transfer_mass(p, i, rec.target, delta), rec};
}

ProbabilityVector transfer_mass(const ProbabilityVector& p, ClassIndex from, ClassIndex to,
                                double delta) {
  if (from.value >= p.size() || to.value >= p.size()) {
    throw std::invalid_argument("transfer index out of range");
  }
  std::vector<double> out = p.components();
  out[from.value] -= delta;
  out[to.value] += delta;
  return ProbabilityVector(std::move(out));
}

AlteredResponse alter_response(const ProbabilityVector& p, const SecretParameters& params,
                               Rng& rng) {
  return Perturber(params).alter(p, rng);
}

std::vector<AlteredResponse> alter_batch(std::span<const ProbabilityVector> ps,
                                         const SecretParameters& params, Rng& rng) {
  const Perturber perturber(params);
  std::vector<AlteredResponse> out;
  out.reserve(ps.size());
  for (const auto& p : ps) out.push_back(perturber.alter(p, rng));
  return out;
}

PredictionFn make_altered_api(PredictionFn original, SecretParameters params,
                              std::uint64_t seed) {
  auto perturber = std::make_shared<const Perturber>(std::move(params));
  auto rng = std::make_shared<Rng>(seed);
  return [original = std::move(original), perturber, rng](std::span<const double> x) {
    return perturber->alter(original(x), *rng).probs;
  };
}

std::vector<double> expected_altered_response(const ProbabilityVector& p,
                                              const SecretParameters& params) {
  const Perturber perturber(params);
  if (p.size() != perturber.n_classes()) {
    throw std::invalid_argument("response dimension does not match secrets");
  }
  std::vector<double> out = p.components();
  const ClassIndex i = argmax(p);
  const ClassSecrets& cs = params.per_class[i.value];
  if (!in_window(p[i.value], cs)) return out;
  const double mean_delta = 0.5 * (cs.a + cs.b);
  out[i.value] -= mean_delta;
  for (std::size_t j = 0; j < out.size(); ++j) out[j] += mean_delta * cs.v[j];
  return out;
}

}  // namespace dynamarks
