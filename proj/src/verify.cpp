#include "dynamarks/verify.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dynamarks {

ResponseMatrix::ResponseMatrix(std::size_t n_classes) : n_(n_classes), cells_(n_classes * n_classes) {
  if (n_classes < 2) throw std::invalid_argument("response matrix needs at least 2 classes");
}

void ResponseMatrix::append(ClassIndex label, std::span<const double> response) {
  if (label.value >= n_) {
    throw std::invalid_argument("label " + std::to_string(label.value) + " out of range for " +
                                std::to_string(n_) + " classes");
  }
  if (response.size() != n_) {
    throw std::invalid_argument("model returned " + std::to_string(response.size()) +
                                " components, expected " + std::to_string(n_));
  }
  for (std::size_t j = 0; j < n_; ++j) {
    const double v = response[j];
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("response value outside [0,1]");
  }
  for (std::size_t j = 0; j < n_; ++j) cells_[label.value * n_ + j].push_back(response[j]);
  ++responses_;
}

ResponseMatrix build_response_matrix(const PredictionFn& model,
                                     std::span<const LabeledSample> verification_set,
                                     std::size_t n_classes) {
  ResponseMatrix m(n_classes);
  for (const auto& sample : verification_set) {
    if (sample.label.value >= n_classes) {
      throw std::invalid_argument("verification label out of range");
    }
    const ProbabilityVector p = model(sample.input);
    m.append(sample.label, p.values());
  }
  return m;
}

ResponseDistribution::ResponseDistribution(std::size_t n_classes, std::size_t bin_count,
                                           double smoothing_epsilon,
                                           std::vector<std::optional<std::vector<double>>> cells)
    : n_(n_classes), bins_(bin_count), epsilon_(smoothing_epsilon), cells_(std::move(cells)) {
  if (cells_.size() != n_ * n_) throw std::invalid_argument("distribution cell count mismatch");
  for (const auto& c : cells_) {
    if (c && c->size() != bins_) throw std::invalid_argument("distribution bin count mismatch");
  }
}

std::vector<double> histogram(std::span<const double> values, std::size_t bin_count,
                              double smoothing_epsilon) {
  if (bin_count < 2) throw std::invalid_argument("bin_count must be >= 2");
  if (!(smoothing_epsilon >= 0.0)) throw std::invalid_argument("smoothing_epsilon must be >= 0");
  if (values.empty()) throw std::invalid_argument("histogram of an empty cell");

  std::vector<double> counts(bin_count, 0.0);
  const double width = static_cast<double>(bin_count);
  for (double v : values) {
    auto bin = static_cast<std::size_t>(v * width);
    if (bin >= bin_count) bin = bin_count - 1;
    counts[bin] += 1.0;
  }
  double total = 0.0;
  for (double& c : counts) {
    c += smoothing_epsilon;
    total += c;
  }
  for (double& c : counts) c /= total;
  return counts;
}

ResponseDistribution make_distribution(const ResponseMatrix& matrix, std::size_t bin_count,
                                       double smoothing_epsilon) {
  if (bin_count < 2) throw std::invalid_argument("bin_count must be >= 2");
  if (!(smoothing_epsilon >= 0.0)) throw std::invalid_argument("smoothing_epsilon must be >= 0");
  const std::size_t n = matrix.n_classes();
  std::vector<std::optional<std::vector<double>>> cells(n * n);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto& values = matrix.cell(y, j);
      if (!values.empty()) cells[y * n + j] = histogram(values, bin_count, smoothing_epsilon);
    }
  }
  return ResponseDistribution(n, bin_count, smoothing_epsilon, std::move(cells));
}

double jsd(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("jsd: bin count mismatch");
  double kl_p = 0.0;
  double kl_q = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double m = 0.5 * (p[k] + q[k]);
    if (p[k] > 0.0) kl_p += p[k] * std::log2(p[k] / m);
    if (q[k] > 0.0) kl_q += q[k] * std::log2(q[k] / m);
  }
  const double d = 0.5 * kl_p + 0.5 * kl_q;
  // Rounding can leave a tiny negative residue for identical inputs.
  if (d < 0.0) return 0.0;
  if (d > 1.0) return 1.0;
  return d;
}

DistanceResult distance(const ResponseDistribution& d1, const ResponseDistribution& d2) {
  if (d1.n_classes() != d2.n_classes() || d1.bin_count() != d2.bin_count()) {
    throw std::invalid_argument("distance: distribution shapes differ");
  }
  DistanceResult r;
  const std::size_t n = d1.n_classes();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto& c1 = d1.cell(i, j);
      const auto& c2 = d2.cell(i, j);
      if (!c1 || !c2) {
        ++r.skipped;
        continue;
      }
      r.total += jsd(*c1, *c2);
    }
  }
  return r;
}

std::string to_string(VerificationStatus s) {
  switch (s) {
    case VerificationStatus::detected:
      return "detected";
    case VerificationStatus::not_detected:
      return "not_detected";
    case VerificationStatus::degenerate_detected:
      return "degenerate_detected";
    case VerificationStatus::inconclusive:
      return "inconclusive";
  }
  return "unknown";
}

VerificationReport verify_matrices(const ResponseMatrix& suspect, const ResponseMatrix& original,
                                   const ResponseMatrix& altered, const VerifyOptions& options) {
  if (!(options.tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  const std::size_t n = suspect.n_classes();
  if (original.n_classes() != n || altered.n_classes() != n) {
    throw std::invalid_argument("response matrices disagree on the number of classes");
  }
  if (suspect.response_count() == 0) throw std::invalid_argument("empty verification set");

  auto d_sm = make_distribution(suspect, options.bin_count, options.smoothing_epsilon);
  auto d_org = make_distribution(original, options.bin_count, options.smoothing_epsilon);
  auto d_alt = make_distribution(altered, options.bin_count, options.smoothing_epsilon);

  // A cell missing from any of the three is dropped from both sums.
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (d_sm.cell(i, j) && d_org.cell(i, j) && d_alt.cell(i, j)) continue;
      ++skipped;
      d_sm.drop_cell(i, j);
      d_org.drop_cell(i, j);
      d_alt.drop_cell(i, j);
    }
  }

  const DistanceResult org = distance(d_org, d_sm);
  const DistanceResult alt = distance(d_alt, d_sm);

  VerificationReport rep;
  rep.delta_org_sm = org.total;
  rep.delta_alt_sm = alt.total;
  rep.tau = options.tau;
  rep.bin_count = options.bin_count;
  rep.smoothing_epsilon = options.smoothing_epsilon;
  rep.skipped_cells = skipped;

  if (rep.delta_alt_sm > 0.0) {
    rep.eta = rep.delta_org_sm / rep.delta_alt_sm;
    rep.detected = rep.eta > rep.tau;
    rep.status = rep.detected ? VerificationStatus::detected : VerificationStatus::not_detected;
  } else if (rep.delta_org_sm > 0.0) {
    rep.eta = std::numeric_limits<double>::infinity();
    rep.detected = true;
    rep.status = VerificationStatus::degenerate_detected;
  } else {
    rep.eta = std::numeric_limits<double>::quiet_NaN();
    rep.detected = false;
    rep.status = VerificationStatus::inconclusive;
  }
  return rep;
}

VerificationReport verify_watermark(const PredictionFn& suspect, const PredictionFn& original,
                                    const PredictionFn& altered,
                                    std::span<const LabeledSample> verification_set,
                                    std::size_t n_classes, const VerifyOptions& options) {
  if (verification_set.empty()) throw std::invalid_argument("empty verification set");
  if (!(options.tau > 0.0)) throw std::invalid_argument("tau must be > 0");
  // Same query order for all three models, as in a single pass over V.
  ResponseMatrix sm(n_classes);
  ResponseMatrix org(n_classes);
  ResponseMatrix alt(n_classes);
  for (const auto& sample : verification_set) {
    sm.append(sample.label, suspect(sample.input).values());
    org.append(sample.label, original(sample.input).values());
    alt.append(sample.label, altered(sample.input).values());
  }
  return verify_matrices(sm, org, alt, options);
}

}  // namespace dynamarks
