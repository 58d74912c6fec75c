#include "dynamarks/core.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dynamarks {

namespace {

double kahan_sum(std::span<const double> values) {
  double sum = 0.0;
  double carry = 0.0;
  for (double v : values) {
    const double y = v - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  return sum;
}

}  // namespace

std::string simplex_violation(std::span<const double> values, double tolerance) {
  if (values.size() < 2) return "fewer than 2 components";
  for (std::size_t k = 0; k < values.size(); ++k) {
    const double v = values[k];
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      std::ostringstream os;
      os << "component " << k << " = " << v << " outside [0,1]";
      return os.str();
    }
  }
  const double total = kahan_sum(values);
  if (std::abs(total - 1.0) > tolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "components sum to " << total << ", not 1";
    return os.str();
  }
  return {};
}

ProbabilityVector::ProbabilityVector(std::vector<double> components, double tolerance)
    : components_(std::move(components)) {
  if (auto why = simplex_violation(components_, tolerance); !why.empty()) {
    throw std::invalid_argument("invalid probability vector: " + why);
  }
}

double ProbabilityVector::sum() const { return kahan_sum(components_); }

ClassIndex argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return ClassIndex{best};
}

SecretVector::SecretVector(std::vector<double> selection_probs)
    : probs_(std::move(selection_probs)) {
  if (probs_.empty()) throw std::invalid_argument("secret vector is empty");
  for (double v : probs_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument("secret vector has a negative or non-finite entry");
    }
  }
  if (std::abs(kahan_sum(probs_) - 1.0) > kSimplexTolerance) {
    throw std::invalid_argument("secret vector selection_probs do not sum to 1");
  }
}

std::string ValidationResult::message() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += v;
  }
  return out;
}

namespace {

void check_scalars(const std::string& where, double alpha, double beta, double a,
                   double b, std::vector<std::string>& out) {
  for (double x : {alpha, beta, a, b}) {
    if (!std::isfinite(x)) {
      out.push_back(where + ": non-finite parameter");
      return;
    }
  }
  if (!(alpha >= 0.0)) out.push_back(where + ": alpha >= 0 violated");
  if (!(alpha < beta)) out.push_back(where + ": alpha < beta violated");
  if (!(beta <= 1.0)) out.push_back(where + ": beta <= 1 violated");
  if (!(a >= 0.0)) out.push_back(where + ": a >= 0 violated");
  if (!(a < b)) out.push_back(where + ": a < b violated");
  // Moving up to b out of a component above alpha, into one below 1 - alpha,
  // keeps both inside [0,1] only if b <= alpha.
  if (!(b <= alpha)) out.push_back(where + ": b <= alpha violated");
}

}  // namespace

ValidationResult validate_profile(const ParameterProfile& profile) {
  ValidationResult r;
  check_scalars("profile", profile.alpha, profile.beta, profile.a, profile.b, r.violations);
  return r;
}

ValidationResult validate_secrets(const SecretParameters& params) {
  ValidationResult r;
  if (params.n_classes < 2) r.violations.push_back("n_classes >= 2 violated");
  if (params.per_class.size() != params.n_classes) {
    r.violations.push_back("per_class has " + std::to_string(params.per_class.size()) +
                           " entries, expected n_classes = " +
                           std::to_string(params.n_classes));
  }
  for (std::size_t i = 0; i < params.per_class.size(); ++i) {
    const auto& cs = params.per_class[i];
    const std::string where = "class " + std::to_string(i);
    if (cs.v.size() != params.n_classes) {
      r.violations.push_back(where + ": v has " + std::to_string(cs.v.size()) +
                             " entries, expected " + std::to_string(params.n_classes));
    }
    bool entries_ok = true;
    for (double x : cs.v) {
      if (!std::isfinite(x) || x < 0.0) entries_ok = false;
    }
    if (!entries_ok) r.violations.push_back(where + ": selection_probs >= 0 violated");
    if (!cs.v.empty() && std::abs(kahan_sum(cs.v) - 1.0) > kSimplexTolerance) {
      r.violations.push_back(where + ": selection_probs sum to 1 violated");
    }
    check_scalars(where, cs.alpha, cs.beta, cs.a, cs.b, r.violations);
  }
  return r;
}

SecretParameters generate_secrets(std::size_t n_classes, std::uint64_t seed,
                                  const ParameterProfile& profile) {
  if (n_classes < 2) throw std::invalid_argument("generate_secrets: n_classes must be >= 2");
  if (auto check = validate_profile(profile); !check.ok()) {
    throw std::invalid_argument("generate_secrets: " + check.message());
  }

  Rng rng(seed);
  SecretParameters params;
  params.n_classes = n_classes;
  params.seed = seed;
  params.per_class.reserve(n_classes);

  const double n = static_cast<double>(n_classes);
  for (std::size_t i = 0; i < n_classes; ++i) {
    ClassSecrets cs;
    cs.alpha = profile.alpha;
    cs.beta = profile.beta;
    cs.a = profile.a;
    cs.b = profile.b;
    switch (profile.vector_rule) {
      case VectorRule::boosted_single: {
        cs.v.assign(n_classes, 1.0 / (n + 1.0));
        cs.v[rng.uniform_index(n_classes)] = 2.0 / (n + 1.0);
        break;
      }
      case VectorRule::uniform:
        cs.v.assign(n_classes, 1.0 / n);
        break;
    }
    params.per_class.push_back(std::move(cs));
  }
  return params;
}

}  // namespace dynamarks
