#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dynamarks/core.hpp"

namespace dynamarks {

// What happened to one response. When `applied` is false, delta is 0 and
// source == target == argmax of the input.
struct PerturbationRecord {
  bool applied = false;
  double delta = 0.0;
  ClassIndex source;
  ClassIndex target;
  // Component reads and writes performed; O(N) per response.
  std::size_t component_ops = 0;
};

struct AlteredResponse {
  ProbabilityVector probs;
  PerturbationRecord record;
};

// Applies the dynamic watermark to individual responses.
//
// For a response p with top class i, if p_i lies strictly inside
// (alpha_i, beta_i) a mass dp ~ U(a_i, b_i) is moved from component i to a
// component j drawn from V_i. Otherwise p is returned bit-for-bit. The secrets
// are validated once at construction, so alter() is O(N).
class Perturber {
 public:
  // Throws std::invalid_argument if the secrets fail validate_secrets().
  explicit Perturber(SecretParameters params);

  const SecretParameters& secrets() const { return params_; }
  std::size_t n_classes() const { return params_.n_classes; }

  // Throws std::invalid_argument on a dimension mismatch.
  AlteredResponse alter(const ProbabilityVector& p, Rng& rng) const;

 private:
  SecretParameters params_;
};

// Moves `delta` of mass from component `from` to component `to`.
ProbabilityVector transfer_mass(const ProbabilityVector& p, ClassIndex from, ClassIndex to,
                                double delta);

AlteredResponse alter_response(const ProbabilityVector& p, const SecretParameters& params,
                               Rng& rng);

// Element-wise alter_response, drawing in order from a single stream.
std::vector<AlteredResponse> alter_batch(std::span<const ProbabilityVector> ps,
                                         const SecretParameters& params, Rng& rng);

// Wraps a model so every query is answered with an altered response. The
// returned function owns its generator, seeded with `seed`.
PredictionFn make_altered_api(PredictionFn original, SecretParameters params,
                              std::uint64_t seed);

// Expected altered response E[alter(p)] in closed form.
std::vector<double> expected_altered_response(const ProbabilityVector& p,
                                              const SecretParameters& params);

}  // namespace dynamarks
