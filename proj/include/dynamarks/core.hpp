#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dynamarks/rng.hpp"

namespace dynamarks {

// Tolerance for the simplex invariant on internally produced vectors.
inline constexpr double kSimplexTolerance = 1e-9;

// A point on the probability simplex: N >= 2 components in [0,1] summing to 1.
class ProbabilityVector {
 public:
  // Throws std::invalid_argument when the simplex invariant is violated by
  // more than `tolerance`.
  explicit ProbabilityVector(std::vector<double> components,
                             double tolerance = kSimplexTolerance);

  std::size_t size() const { return components_.size(); }
  double operator[](std::size_t k) const { return components_[k]; }
  std::span<const double> values() const { return components_; }
  const std::vector<double>& components() const { return components_; }
  double sum() const;

  friend bool operator==(const ProbabilityVector&, const ProbabilityVector&) = default;

 private:
  std::vector<double> components_;
};

// Returns an empty string when `values` is a valid simplex point, otherwise a
// short description of the first violation.
std::string simplex_violation(std::span<const double> values, double tolerance);

// Index of a class in [0, N).
struct ClassIndex {
  std::size_t value = 0;
  friend bool operator==(ClassIndex, ClassIndex) = default;
};

// Index of the largest component; ties resolve to the lowest index.
ClassIndex argmax(std::span<const double> values);
inline ClassIndex argmax(const ProbabilityVector& p) { return argmax(p.values()); }

// Categorical selection distribution V_i over target class indices.
class SecretVector {
 public:
  explicit SecretVector(std::vector<double> selection_probs);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t k) const { return probs_[k]; }
  std::span<const double> values() const { return probs_; }

  friend bool operator==(const SecretVector&, const SecretVector&) = default;

 private:
  std::vector<double> probs_;
};

enum class DeltaDistribution { uniform };

// Per-class embedding parameters: the window (alpha, beta) on the top
// probability that triggers an alteration and the range (a, b) of the
// transferred mass.
struct ClassSecrets {
  std::vector<double> v;
  double alpha = 0.9;
  double beta = 1.0;
  double a = 0.01;
  double b = 0.19;

  friend bool operator==(const ClassSecrets&, const ClassSecrets&) = default;
};

// The watermark key. Not validated on construction; see validate_secrets().
struct SecretParameters {
  std::size_t n_classes = 0;
  std::vector<ClassSecrets> per_class;
  std::uint64_t seed = 0;

  friend bool operator==(const SecretParameters&, const SecretParameters&) = default;
};

enum class VectorRule {
  // One index drawn uniformly gets weight 2/(N+1), the rest 1/(N+1).
  boosted_single,
  uniform,
};

struct ParameterProfile {
  double alpha = 0.9;
  double beta = 1.0;
  double a = 0.01;
  double b = 0.19;
  VectorRule vector_rule = VectorRule::boosted_single;
  DeltaDistribution delta_distribution = DeltaDistribution::uniform;
};

struct ValidationResult {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string message() const;
};

// Checks the profile scalars; shared by generate_secrets and the CLI.
ValidationResult validate_profile(const ParameterProfile& profile);

ValidationResult validate_secrets(const SecretParameters& params);

// Throws std::invalid_argument for n_classes < 2 or an invalid profile.
SecretParameters generate_secrets(std::size_t n_classes, std::uint64_t seed,
                                  const ParameterProfile& profile = {});

// A feature vector paired with its true class.
struct LabeledSample {
  std::vector<double> input;
  ClassIndex label;
};

// Black-box model access: features in, probability vector out. Non-const so
// stochastic models (the altered API) can advance their generators.
using PredictionFn = std::function<ProbabilityVector(std::span<const double>)>;

}  // namespace dynamarks
