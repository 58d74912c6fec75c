#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dynamarks/core.hpp"
#include "dynamarks/verify.hpp"

namespace dynamarks {

// ---------------------------------------------------------------------------
// Synthetic task
// ---------------------------------------------------------------------------

struct TaskSpec {
  std::size_t n_classes = 4;
  std::size_t feature_dim = 2;
  std::size_t train_size = 2000;
  std::size_t test_size = 500;
  // Distance of each class mean from the origin, in units of the noise
  // standard deviation.
  double separation = 3.0;
  double covariance_scale = 1.0;
};

// Isotropic Gaussian mixture. Class means sit on a circle of radius
// `separation` in the first two feature dimensions; remaining dimensions carry
// pure noise. Labels are balanced (round-robin) and then shuffled.
struct SyntheticTask {
  TaskSpec spec;
  std::vector<std::vector<double>> class_means;
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> test;
};

// Throws std::invalid_argument for separation <= 0, fewer than 2 classes,
// feature_dim < 2 or split sizes below n_classes.
SyntheticTask make_task(std::uint64_t seed, const TaskSpec& spec = {});

// Task from externally supplied samples (e.g. a dataset CSV): the samples are
// shuffled with `seed` and the last `test_fraction` of them held out.
SyntheticTask task_from_samples(std::vector<LabeledSample> samples, std::size_t n_classes,
                                double test_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Toy classifiers
// ---------------------------------------------------------------------------

enum class Architecture { softmax_linear, mlp_1_hidden };

std::string to_string(Architecture a);
// Accepts "softmax-linear"/"linear" and "mlp-1-hidden"/"mlp".
Architecture parse_architecture(const std::string& tag);

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Softmax regression, or a one-hidden-layer ReLU MLP with a softmax output.
//
// Tensor layout (row-major, weights are [out, in]):
//   softmax-linear: W [N, M], b [N]
//   mlp-1-hidden:   W1 [H, M], b1 [H], W2 [N, H], b2 [N]
class ToyClassifier {
 public:
  // Randomly initialised model (He-scaled normal weights, zero biases).
  static ToyClassifier init(Architecture arch, std::size_t input_dim, std::size_t n_classes,
                            std::size_t hidden_units, Rng& rng);

  // Throws std::invalid_argument if the tensor shapes do not fit `arch`.
  ToyClassifier(Architecture arch, std::vector<Tensor> tensors);

  Architecture architecture() const { return arch_; }
  std::size_t input_dim() const { return input_dim_; }
  std::size_t n_classes() const { return n_classes_; }
  std::size_t hidden_units() const { return hidden_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }
  std::vector<Tensor>& mutable_tensors() { return tensors_; }
  // Bias tensors are exempt from pruning.
  static bool is_bias(std::size_t tensor_index) { return tensor_index % 2 == 1; }

  std::vector<double> logits(std::span<const double> x) const;
  ProbabilityVector predict(std::span<const double> x) const;
  ClassIndex predict_class(std::span<const double> x) const;

  // Shares an immutable snapshot of this model.
  PredictionFn as_api() const;

  friend bool operator==(const ToyClassifier&, const ToyClassifier&) = default;

 private:
  ToyClassifier() = default;
  void check_shapes();

  Architecture arch_ = Architecture::softmax_linear;
  std::size_t input_dim_ = 0;
  std::size_t n_classes_ = 0;
  std::size_t hidden_ = 0;
  std::vector<Tensor> tensors_;
};

// Softmax of a logit vector; max-subtracted for stability.
std::vector<double> softmax(std::span<const double> logits);

struct TrainConfig {
  std::size_t epochs = 40;
  double learning_rate = 0.1;
  std::size_t batch_size = 32;
  std::size_t hidden_units = 32;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Mini-batch SGD on cross-entropy against probability-vector targets (one-hot
// targets give ordinary hard-label training). Returns the final epoch's mean
// loss. Throws TrainingDiverged when the loss or any weight becomes non-finite.
double train_classifier(ToyClassifier& model, std::span<const std::vector<double>> inputs,
                        std::span<const std::vector<double>> targets, const TrainConfig& cfg,
                        Rng& rng);

double accuracy(const ToyClassifier& model, std::span<const LabeledSample> samples);
double accuracy(const PredictionFn& model, std::span<const LabeledSample> samples);

// The original model F_org: hard-label training on the task's training split.
ToyClassifier train_victim(const SyntheticTask& task, Architecture arch, const TrainConfig& cfg,
                           std::uint64_t seed);

// Trains on the first ceil(gamma * |train|) training samples with hard labels.
// Used both for the benign control model and for attacker subsets.
ToyClassifier train_on_fraction(const SyntheticTask& task, double gamma, Architecture arch,
                                const TrainConfig& cfg, std::uint64_t seed);

// First ceil(gamma * |train|) training inputs: the attacker's query set.
std::vector<std::vector<double>> attacker_inputs(const SyntheticTask& task, double gamma);

// Model extraction: queries `victim_api` once per input, builds the substitute
// dataset of (input, soft label) pairs and distils a surrogate from it.
// Throws std::invalid_argument for an empty query set or a response whose
// dimension disagrees with the first.
ToyClassifier extract_surrogate(const PredictionFn& victim_api,
                                std::span<const std::vector<double>> inputs, Architecture arch,
                                const TrainConfig& cfg, std::uint64_t seed);

// Repeats each query `repeats` times and returns the component-wise mean.
PredictionFn averaging_attack_api(PredictionFn altered_api, std::size_t repeats);

// Global magnitude pruning: zeroes the floor(kappa * W) smallest-magnitude
// weights across all weight tensors (biases exempt). Throws for kappa outside
// [0, 1).
ToyClassifier prune_model(const ToyClassifier& model, double kappa);

// ---------------------------------------------------------------------------
// Campaign
// ---------------------------------------------------------------------------

struct AttackConfig {
  enum class Kind { none, averaging, pruning };
  Kind kind = Kind::none;
  std::size_t repeats = 100;
  double kappa = 0.0;
};

std::string to_string(AttackConfig::Kind k);
std::string describe(const AttackConfig& a);

struct ArchitecturePair {
  Architecture victim = Architecture::softmax_linear;
  Architecture surrogate = Architecture::softmax_linear;
};

struct CampaignConfig {
  std::uint64_t seed = 1;
  std::size_t trials = 1;
  TaskSpec task;
  // When set, samples are read from this dataset CSV instead of synthesised.
  std::optional<std::filesystem::path> dataset_csv;
  double dataset_test_fraction = 0.2;
  TrainConfig victim_training;
  TrainConfig surrogate_training;
  ParameterProfile profile;
  VerifyOptions verify;
  std::vector<double> gammas{1.0};
  std::vector<AttackConfig> attacks{AttackConfig{}};
  std::vector<ArchitecturePair> architectures{ArchitecturePair{}};
  bool benign = true;
  double benign_gamma = 0.5;
  // Write org/alt/suspect response logs for every cell, plus each trial's
  // victim weights and secrets, under out_dir/logs.
  bool write_logs = false;
};

// Throws std::invalid_argument when a gamma lies outside (0,1], a kappa
// outside [0,1), repeats is 0, or trials is 0.
void validate_campaign(const CampaignConfig& cfg);

struct CampaignRow {
  std::size_t trial = 0;
  double gamma = 0.0;
  std::string kind;  // "surrogate" or "benign"
  std::string attack;
  double kappa = 0.0;
  std::size_t repeats = 0;
  Architecture victim_arch = Architecture::softmax_linear;
  Architecture suspect_arch = Architecture::softmax_linear;
  double victim_accuracy = 0.0;
  double altered_accuracy = 0.0;
  double suspect_accuracy = 0.0;
  std::optional<VerificationReport> report;
  std::string error;  // non-empty when the cell failed
};

struct CampaignReport {
  std::vector<CampaignRow> rows;
};

// Runs every (trial, gamma, attack, architecture) cell, plus a benign control
// per (trial, victim architecture) when enabled. Cells that throw are
// recorded with their error and the campaign continues. When `out_dir` is
// given, writes campaign.csv and campaign.json there (and logs/ if enabled).
CampaignReport run_campaign(const CampaignConfig& cfg,
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace dynamarks
