#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynamarks/core.hpp"

namespace dynamarks {

// N x N grid of observed probabilities. Cell (y, j) collects component j of
// every response to a verification input whose true label is y.
class ResponseMatrix {
 public:
  explicit ResponseMatrix(std::size_t n_classes);

  std::size_t n_classes() const { return n_; }
  const std::vector<double>& cell(std::size_t y, std::size_t j) const {
    return cells_[y * n_ + j];
  }
  // Number of responses consumed (each contributes one value per column).
  std::size_t response_count() const { return responses_; }

  // Throws std::invalid_argument on label or dimension mismatch.
  void append(ClassIndex label, std::span<const double> response);

 private:
  std::size_t n_;
  std::size_t responses_ = 0;
  std::vector<std::vector<double>> cells_;
};

ResponseMatrix build_response_matrix(const PredictionFn& model,
                                     std::span<const LabeledSample> verification_set,
                                     std::size_t n_classes);

// Binned, smoothed empirical distribution of every cell of a ResponseMatrix.
// Empty cells are absent (std::nullopt).
class ResponseDistribution {
 public:
  ResponseDistribution(std::size_t n_classes, std::size_t bin_count, double smoothing_epsilon,
                       std::vector<std::optional<std::vector<double>>> cells);

  std::size_t n_classes() const { return n_; }
  std::size_t bin_count() const { return bins_; }
  double smoothing_epsilon() const { return epsilon_; }
  const std::optional<std::vector<double>>& cell(std::size_t y, std::size_t j) const {
    return cells_[y * n_ + j];
  }
  void drop_cell(std::size_t y, std::size_t j) { cells_[y * n_ + j].reset(); }

 private:
  std::size_t n_;
  std::size_t bins_;
  double epsilon_;
  std::vector<std::optional<std::vector<double>>> cells_;
};

inline constexpr std::size_t kDefaultBinCount = 50;
inline constexpr double kDefaultSmoothingEpsilon = 1e-9;
inline constexpr double kDefaultTau = 1.0;

// Equal-width histogram of `values` on [0,1] (1.0 falls in the last bin),
// with `smoothing_epsilon` added to each bin, normalised to sum 1.
std::vector<double> histogram(std::span<const double> values, std::size_t bin_count,
                              double smoothing_epsilon);

ResponseDistribution make_distribution(const ResponseMatrix& matrix, std::size_t bin_count,
                                       double smoothing_epsilon);

// Jensen-Shannon divergence, base 2, in [0, 1].
double jsd(std::span<const double> p, std::span<const double> q);

struct DistanceResult {
  double total = 0.0;
  std::size_t skipped = 0;
};

// Sum of per-cell JSD over cells present in both operands, accumulated in
// row-major order. Cells absent from either side are skipped and counted.
DistanceResult distance(const ResponseDistribution& d1, const ResponseDistribution& d2);

enum class VerificationStatus {
  detected,
  not_detected,
  // delta_alt_sm == 0 < delta_org_sm: eta is infinite, reported as detected.
  degenerate_detected,
  // Both distances are zero; no decision possible.
  inconclusive,
};

std::string to_string(VerificationStatus s);

struct VerificationReport {
  double delta_org_sm = 0.0;
  double delta_alt_sm = 0.0;
  // +infinity when degenerate, NaN when inconclusive.
  double eta = 0.0;
  double tau = kDefaultTau;
  bool detected = false;
  std::size_t skipped_cells = 0;
  std::size_t bin_count = kDefaultBinCount;
  double smoothing_epsilon = kDefaultSmoothingEpsilon;
  VerificationStatus status = VerificationStatus::not_detected;
};

struct VerifyOptions {
  double tau = kDefaultTau;
  std::size_t bin_count = kDefaultBinCount;
  double smoothing_epsilon = kDefaultSmoothingEpsilon;
};

// Decision step on already-collected responses. Throws std::invalid_argument
// on shape mismatch, tau <= 0 or an empty suspect matrix.
VerificationReport verify_matrices(const ResponseMatrix& suspect, const ResponseMatrix& original,
                                   const ResponseMatrix& altered, const VerifyOptions& options = {});

// Queries all three models on the verification set and decides whether the
// suspect carries the watermark (eta = delta_org_sm / delta_alt_sm > tau).
VerificationReport verify_watermark(const PredictionFn& suspect, const PredictionFn& original,
                                    const PredictionFn& altered,
                                    std::span<const LabeledSample> verification_set,
                                    std::size_t n_classes, const VerifyOptions& options = {});

}  // namespace dynamarks
