#include "dynamarks/simkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numbers>

#include "dynamarks/io.hpp"
#include "dynamarks/perturb.hpp"

namespace dynamarks {

// ---------------------------------------------------------------------------
// Tasks

namespace {

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t k = v.size(); k > 1; --k) {
    std::swap(v[k - 1], v[rng.uniform_index(k)]);
  }
}

}  // namespace

SyntheticTask make_task(std::uint64_t seed, const TaskSpec& spec) {
  if (!(spec.separation > 0.0)) throw std::invalid_argument("make_task: separation must be > 0");
  if (!(spec.covariance_scale > 0.0)) {
    throw std::invalid_argument("make_task: covariance_scale must be > 0");
  }
  if (spec.n_classes < 2) throw std::invalid_argument("make_task: need at least 2 classes");
  if (spec.feature_dim < 2) throw std::invalid_argument("make_task: feature_dim must be >= 2");
  if (spec.train_size < spec.n_classes || spec.test_size < spec.n_classes) {
    throw std::invalid_argument("make_task: split sizes must be >= n_classes");
  }

  SyntheticTask task;
  task.spec = spec;
  const double n = static_cast<double>(spec.n_classes);
  for (std::size_t k = 0; k < spec.n_classes; ++k) {
    std::vector<double> mean(spec.feature_dim, 0.0);
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / n;
    mean[0] = spec.separation * std::cos(theta);
    mean[1] = spec.separation * std::sin(theta);
    task.class_means.push_back(std::move(mean));
  }

  Rng rng(seed);
  const double sd = std::sqrt(spec.covariance_scale);
  auto draw_split = [&](std::size_t size) {
    std::vector<std::size_t> labels(size);
    for (std::size_t s = 0; s < size; ++s) labels[s] = s % spec.n_classes;
    shuffle_in_place(labels, rng);
    std::vector<LabeledSample> out;
    out.reserve(size);
    for (std::size_t label : labels) {
      LabeledSample sample;
      sample.label = ClassIndex{label};
      sample.input.resize(spec.feature_dim);
      for (std::size_t d = 0; d < spec.feature_dim; ++d) {
        sample.input[d] = task.class_means[label][d] + sd * rng.normal();
      }
      out.push_back(std::move(sample));
    }
    return out;
  };
  task.train = draw_split(spec.train_size);
  task.test = draw_split(spec.test_size);
  return task;
}

SyntheticTask task_from_samples(std::vector<LabeledSample> samples, std::size_t n_classes,
                                double test_fraction, std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("task_from_samples: no samples");
  if (n_classes < 2) throw std::invalid_argument("task_from_samples: need at least 2 classes");
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw std::invalid_argument("task_from_samples: test_fraction must lie in (0,1)");
  }
  const std::size_t dim = samples.front().input.size();
  for (const auto& s : samples) {
    if (s.input.size() != dim) throw std::invalid_argument("task_from_samples: ragged features");
    if (s.label.value >= n_classes) throw std::invalid_argument("task_from_samples: bad label");
  }
  Rng rng(seed);
  shuffle_in_place(samples, rng);
  const auto n_test = static_cast<std::size_t>(
      std::ceil(test_fraction * static_cast<double>(samples.size())));
  if (n_test >= samples.size()) throw std::invalid_argument("task_from_samples: too few samples");

  SyntheticTask task;
  task.spec.n_classes = n_classes;
  task.spec.feature_dim = dim;
  task.spec.test_size = n_test;
  task.spec.train_size = samples.size() - n_test;
  task.train.assign(samples.begin(), samples.end() - static_cast<std::ptrdiff_t>(n_test));
  task.test.assign(samples.end() - static_cast<std::ptrdiff_t>(n_test), samples.end());
  return task;
}

// ---------------------------------------------------------------------------
// Classifiers

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::softmax_linear:
      return "softmax-linear";
    case Architecture::mlp_1_hidden:
      return "mlp-1-hidden";
  }
  return "unknown";
}

Architecture parse_architecture(const std::string& tag) {
  if (tag == "softmax-linear" || tag == "linear") return Architecture::softmax_linear;
  if (tag == "mlp-1-hidden" || tag == "mlp") return Architecture::mlp_1_hidden;
  throw std::invalid_argument("unknown architecture '" + tag + "'");
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  const double top = *std::max_element(out.begin(), out.end());
  double total = 0.0;
  for (double& z : out) {
    z = std::exp(z - top);
    total += z;
  }
  for (double& z : out) z /= total;
  return out;
}

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t{{rows, cols}, std::vector<double>(rows * cols)};
  const double scale = std::sqrt(2.0 / static_cast<double>(cols));
  for (double& w : t.data) w = scale * rng.normal();
  return t;
}

Tensor zero_tensor(std::size_t n) { return Tensor{{n}, std::vector<double>(n, 0.0)}; }

// y = W x + b for W [rows, cols].
void affine(const Tensor& w, const Tensor& b, std::span<const double> x, std::span<double> y) {
  const std::size_t rows = w.shape[0];
  const std::size_t cols = w.shape[1];
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b.data[r];
    const double* row = &w.data[r * cols];
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

}  // namespace

ToyClassifier ToyClassifier::init(Architecture arch, std::size_t input_dim, std::size_t n_classes,
                                  std::size_t hidden_units, Rng& rng) {
  if (input_dim == 0 || n_classes < 2) throw std::invalid_argument("ToyClassifier: bad dimensions");
  std::vector<Tensor> t;
  if (arch == Architecture::softmax_linear) {
    t.push_back(random_tensor(n_classes, input_dim, rng));
    t.push_back(zero_tensor(n_classes));
  } else {
    if (hidden_units == 0) throw std::invalid_argument("ToyClassifier: hidden_units must be > 0");
    t.push_back(random_tensor(hidden_units, input_dim, rng));
    t.push_back(zero_tensor(hidden_units));
    t.push_back(random_tensor(n_classes, hidden_units, rng));
    t.push_back(zero_tensor(n_classes));
  }
  return ToyClassifier(arch, std::move(t));
}

ToyClassifier::ToyClassifier(Architecture arch, std::vector<Tensor> tensors)
    : arch_(arch), tensors_(std::move(tensors)) {
  check_shapes();
}

void ToyClassifier::check_shapes() {
  const std::size_t expected = arch_ == Architecture::softmax_linear ? 2 : 4;
  if (tensors_.size() != expected) {
    throw std::invalid_argument(to_string(arch_) + " expects " + std::to_string(expected) +
                                " tensors");
  }
  for (std::size_t k = 0; k < tensors_.size(); ++k) {
    const auto& t = tensors_[k];
    const std::size_t rank = is_bias(k) ? 1 : 2;
    if (t.shape.size() != rank) throw std::invalid_argument("tensor " + std::to_string(k) + " has wrong rank");
    std::size_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count == 0 || count != t.data.size()) {
      throw std::invalid_argument("tensor " + std::to_string(k) + " data does not match shape");
    }
    if (is_bias(k) && t.shape[0] != tensors_[k - 1].shape[0]) {
      throw std::invalid_argument("bias " + std::to_string(k) + " does not match its weights");
    }
  }
  input_dim_ = tensors_[0].shape[1];
  if (arch_ == Architecture::softmax_linear) {
    hidden_ = 0;
    n_classes_ = tensors_[0].shape[0];
  } else {
    hidden_ = tensors_[0].shape[0];
    if (tensors_[2].shape[1] != hidden_) {
      throw std::invalid_argument("output layer width does not match hidden layer");
    }
    n_classes_ = tensors_[2].shape[0];
  }
  if (n_classes_ < 2) throw std::invalid_argument("classifier needs at least 2 outputs");
}

std::vector<double> ToyClassifier::logits(std::span<const double> x) const {
  if (x.size() != input_dim_) {
    throw std::invalid_argument("input has " + std::to_string(x.size()) + " features, model expects " +
                                std::to_string(input_dim_));
  }
  std::vector<double> z(n_classes_);
  if (arch_ == Architecture::softmax_linear) {
    affine(tensors_[0], tensors_[1], x, z);
    return z;
  }
  std::vector<double> h(hidden_);
  affine(tensors_[0], tensors_[1], x, h);
  for (double& v : h) v = std::max(v, 0.0);
  affine(tensors_[2], tensors_[3], h, z);
  return z;
}

ProbabilityVector ToyClassifier::predict(std::span<const double> x) const {
  return ProbabilityVector(softmax(logits(x)));
}

ClassIndex ToyClassifier::predict_class(std::span<const double> x) const {
  return argmax(logits(x));
}

PredictionFn ToyClassifier::as_api() const {
  auto snapshot = std::make_shared<const ToyClassifier>(*this);
  return [snapshot](std::span<const double> x) { return snapshot->predict(x); };
}

// ---------------------------------------------------------------------------
// Training

double train_classifier(ToyClassifier& model, std::span<const std::vector<double>> inputs,
                        std::span<const std::vector<double>> targets, const TrainConfig& cfg,
                        Rng& rng) {
  if (inputs.size() != targets.size()) throw std::invalid_argument("inputs/targets size mismatch");
  if (inputs.empty()) throw std::invalid_argument("no training data");
  if (cfg.batch_size == 0) throw std::invalid_argument("batch_size must be > 0");
  if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");

  const std::size_t n = model.n_classes();
  const std::size_t m = model.input_dim();
  const std::size_t h = model.hidden_units();
  const bool mlp = model.architecture() == Architecture::mlp_1_hidden;
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    if (inputs[s].size() != m || targets[s].size() != n) {
      throw std::invalid_argument("training sample " + std::to_string(s) + " has wrong shape");
    }
  }

  auto& t = model.mutable_tensors();
  std::vector<std::vector<double>> grads;
  for (const auto& tensor : t) grads.emplace_back(tensor.data.size(), 0.0);

  std::vector<std::size_t> order(inputs.size());
  for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;

  std::vector<double> hidden(h), dz(n), dh(h);
  double last_loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_in_place(order, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);

      for (std::size_t b = start; b < end; ++b) {
        const auto& x = inputs[order[b]];
        const auto& target = targets[order[b]];

        std::vector<double> z(n);
        if (mlp) {
          affine(t[0], t[1], x, hidden);
          for (double& v : hidden) v = std::max(v, 0.0);
          affine(t[2], t[3], hidden, z);
        } else {
          affine(t[0], t[1], x, z);
        }
        const auto p = softmax(z);
        for (std::size_t k = 0; k < n; ++k) {
          if (target[k] > 0.0) epoch_loss -= target[k] * std::log(std::max(p[k], 1e-300));
          dz[k] = p[k] - target[k];
        }

        // Output layer.
        const std::size_t out_w = mlp ? 2 : 0;
        std::span<const double> out_in = mlp ? std::span<const double>(hidden) : std::span<const double>(x);
        const std::size_t cols = out_in.size();
        for (std::size_t k = 0; k < n; ++k) {
          grads[out_w + 1][k] += dz[k];
          double* g = &grads[out_w][k * cols];
          for (std::size_t c = 0; c < cols; ++c) g[c] += dz[k] * out_in[c];
        }
        if (!mlp) continue;

        // Hidden layer.
        for (std::size_t r = 0; r < h; ++r) {
          if (hidden[r] <= 0.0) {
            dh[r] = 0.0;
            continue;
          }
          double acc = 0.0;
          for (std::size_t k = 0; k < n; ++k) acc += t[2].data[k * h + r] * dz[k];
          dh[r] = acc;
        }
        for (std::size_t r = 0; r < h; ++r) {
          if (dh[r] == 0.0) continue;
          grads[1][r] += dh[r];
          double* g = &grads[0][r * m];
          for (std::size_t c = 0; c < m; ++c) g[c] += dh[r] * x[c];
        }
      }

      const double step = cfg.learning_rate / static_cast<double>(end - start);
      for (std::size_t k = 0; k < t.size(); ++k) {
        auto& w = t[k].data;
        for (std::size_t e = 0; e < w.size(); ++e) w[e] -= step * grads[k][e];
      }
    }
    last_loss = epoch_loss / static_cast<double>(inputs.size());
    bool weights_finite = true;
    for (const auto& tensor : t) {
      for (double w : tensor.data) weights_finite = weights_finite && std::isfinite(w);
    }
    if (!std::isfinite(last_loss) || !weights_finite) {
      throw TrainingDiverged("training diverged at epoch " + std::to_string(epoch) +
                             " (non-finite loss or weights)");
    }
  }
  return last_loss;
}

double accuracy(const ToyClassifier& model, std::span<const LabeledSample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) hits += model.predict_class(s.input) == s.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

double accuracy(const PredictionFn& model, std::span<const LabeledSample> samples) {
  if (samples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : samples) hits += argmax(model(s.input)) == s.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(samples.size());
}

namespace {

std::vector<double> one_hot(ClassIndex label, std::size_t n) {
  std::vector<double> v(n, 0.0);
  v[label.value] = 1.0;
  return v;
}

std::size_t fraction_count(std::size_t total, double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  const auto count = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(total)));
  return std::clamp<std::size_t>(count, 1, total);
}

}  // namespace

ToyClassifier train_on_fraction(const SyntheticTask& task, double gamma, Architecture arch,
                                const TrainConfig& cfg, std::uint64_t seed) {
  const std::size_t count = fraction_count(task.train.size(), gamma);
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> targets;
  inputs.reserve(count);
  targets.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    inputs.push_back(task.train[s].input);
    targets.push_back(one_hot(task.train[s].label, task.spec.n_classes));
  }
  Rng rng(seed);
  auto model = ToyClassifier::init(arch, task.spec.feature_dim, task.spec.n_classes,
                                   cfg.hidden_units, rng);
  train_classifier(model, inputs, targets, cfg, rng);
  return model;
}

ToyClassifier train_victim(const SyntheticTask& task, Architecture arch, const TrainConfig& cfg,
                           std::uint64_t seed) {
  return train_on_fraction(task, 1.0, arch, cfg, seed);
}

std::vector<std::vector<double>> attacker_inputs(const SyntheticTask& task, double gamma) {
  const std::size_t count = fraction_count(task.train.size(), gamma);
  std::vector<std::vector<double>> out;
  out.reserve(count);
  for (std::size_t s = 0; s < count; ++s) out.push_back(task.train[s].input);
  return out;
}

ToyClassifier extract_surrogate(const PredictionFn& victim_api,
                                std::span<const std::vector<double>> inputs, Architecture arch,
                                const TrainConfig& cfg, std::uint64_t seed) {
  if (inputs.empty()) throw std::invalid_argument("extract_surrogate: no attacker inputs");

  // Substitute dataset: (x, soft label) pairs from the API.
  std::vector<std::vector<double>> soft_labels;
  soft_labels.reserve(inputs.size());
  for (const auto& x : inputs) {
    ProbabilityVector p = victim_api(x);
    if (!soft_labels.empty() && p.size() != soft_labels.front().size()) {
      throw std::invalid_argument("extract_surrogate: API response dimension changed");
    }
    soft_labels.push_back(p.components());
  }

  Rng rng(seed);
  auto model = ToyClassifier::init(arch, inputs.front().size(), soft_labels.front().size(),
                                   cfg.hidden_units, rng);
  train_classifier(model, inputs, soft_labels, cfg, rng);
  return model;
}

PredictionFn averaging_attack_api(PredictionFn altered_api, std::size_t repeats) {
  if (repeats == 0) throw std::invalid_argument("averaging_attack_api: repeats must be >= 1");
  return [api = std::move(altered_api), repeats](std::span<const double> x) {
    std::vector<double> mean;
    for (std::size_t r = 0; r < repeats; ++r) {
      const ProbabilityVector p = api(x);
      if (mean.empty()) mean.assign(p.size(), 0.0);
      for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
    }
    double total = 0.0;
    for (double v : mean) total += v;
    for (double& v : mean) v /= total;
    return ProbabilityVector(std::move(mean));
  };
}

ToyClassifier prune_model(const ToyClassifier& model, double kappa) {
  if (!(kappa >= 0.0 && kappa < 1.0)) throw std::invalid_argument("kappa must lie in [0, 1)");
  ToyClassifier pruned = model;
  auto& tensors = pruned.mutable_tensors();

  struct Slot {
    double magnitude;
    std::size_t tensor;
    std::size_t index;
  };
  std::vector<Slot> slots;
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    if (ToyClassifier::is_bias(k)) continue;
    for (std::size_t e = 0; e < tensors[k].data.size(); ++e) {
      slots.push_back({std::abs(tensors[k].data[e]), k, e});
    }
  }
  const auto count = static_cast<std::size_t>(std::floor(kappa * static_cast<double>(slots.size())));
  if (count == 0) return pruned;

  // Ties broken by position so the result is deterministic.
  auto less = [](const Slot& x, const Slot& y) {
    if (x.magnitude != y.magnitude) return x.magnitude < y.magnitude;
    if (x.tensor != y.tensor) return x.tensor < y.tensor;
    return x.index < y.index;
  };
  std::nth_element(slots.begin(), slots.begin() + static_cast<std::ptrdiff_t>(count - 1),
                   slots.end(), less);
  for (std::size_t s = 0; s < count; ++s) tensors[slots[s].tensor].data[slots[s].index] = 0.0;
  return pruned;
}

// ---------------------------------------------------------------------------
// Campaign

std::string to_string(AttackConfig::Kind k) {
  switch (k) {
    case AttackConfig::Kind::none:
      return "none";
    case AttackConfig::Kind::averaging:
      return "averaging";
    case AttackConfig::Kind::pruning:
      return "pruning";
  }
  return "unknown";
}

std::string describe(const AttackConfig& a) {
  switch (a.kind) {
    case AttackConfig::Kind::none:
      return "none";
    case AttackConfig::Kind::averaging:
      return "averaging(repeats=" + std::to_string(a.repeats) + ")";
    case AttackConfig::Kind::pruning:
      return "pruning(kappa=" + io::format_double(a.kappa) + ")";
  }
  return "unknown";
}

void validate_campaign(const CampaignConfig& cfg) {
  if (cfg.trials == 0) throw std::invalid_argument("campaign: trials must be >= 1");
  for (double g : cfg.gammas) {
    if (!(g > 0.0 && g <= 1.0)) throw std::invalid_argument("campaign: gamma must lie in (0, 1]");
  }
  if (cfg.benign && !(cfg.benign_gamma > 0.0 && cfg.benign_gamma <= 1.0)) {
    throw std::invalid_argument("campaign: benign_gamma must lie in (0, 1]");
  }
  for (const auto& a : cfg.attacks) {
    if (a.kind == AttackConfig::Kind::pruning && !(a.kappa >= 0.0 && a.kappa < 1.0)) {
      throw std::invalid_argument("campaign: kappa must lie in [0, 1)");
    }
    if (a.kind == AttackConfig::Kind::averaging && a.repeats == 0) {
      throw std::invalid_argument("campaign: repeats must be >= 1");
    }
  }
  if (auto check = validate_profile(cfg.profile); !check.ok()) {
    throw std::invalid_argument("campaign: " + check.message());
  }
  if (!(cfg.verify.tau > 0.0)) throw std::invalid_argument("campaign: tau must be > 0");
  if (cfg.verify.bin_count < 2) throw std::invalid_argument("campaign: bins must be >= 2");
}

namespace {

io::ResponseLog log_of(const PredictionFn& model, std::span<const LabeledSample> samples,
                       std::size_t n_classes) {
  io::ResponseLog log;
  log.n_classes = n_classes;
  for (std::size_t s = 0; s < samples.size(); ++s) {
    log.rows.push_back({static_cast<std::int64_t>(s),
                        static_cast<std::int64_t>(samples[s].label.value),
                        model(samples[s].input).components()});
  }
  return log;
}

struct CellOutcome {
  VerificationReport report;
  double suspect_accuracy = 0.0;
};

// Verifies `suspect` against fresh original/altered responses on the test
// split, optionally writing the three response logs.
CellOutcome evaluate_suspect(const ToyClassifier& suspect, const PredictionFn& original,
                             const SecretParameters& secrets, const SyntheticTask& task,
                             const VerifyOptions& options, std::uint64_t verify_seed,
                             const std::optional<std::filesystem::path>& log_prefix) {
  const std::size_t n = task.spec.n_classes;
  const PredictionFn suspect_api = suspect.as_api();
  const PredictionFn altered = make_altered_api(original, secrets, verify_seed);

  const io::ResponseLog sm_log = log_of(suspect_api, task.test, n);
  const io::ResponseLog org_log = log_of(original, task.test, n);
  const io::ResponseLog alt_log = log_of(altered, task.test, n);
  if (log_prefix) {
    io::save_response_log(log_prefix->string() + "_suspect.csv", sm_log);
    io::save_response_log(log_prefix->string() + "_original.csv", org_log);
    io::save_response_log(log_prefix->string() + "_altered.csv", alt_log);
  }

  CellOutcome out;
  out.report = verify_matrices(io::response_matrix_from_log(sm_log),
                               io::response_matrix_from_log(org_log),
                               io::response_matrix_from_log(alt_log), options);
  out.suspect_accuracy = accuracy(suspect, task.test);
  return out;
}

}  // namespace

CampaignReport run_campaign(const CampaignConfig& cfg,
                            const std::optional<std::filesystem::path>& out_dir) {
  validate_campaign(cfg);
  CampaignReport report;

  std::optional<std::filesystem::path> log_dir;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    if (cfg.write_logs) {
      log_dir = *out_dir / "logs";
      std::filesystem::create_directories(*log_dir);
    }
  }

  std::optional<io::Dataset> dataset;
  if (cfg.dataset_csv) dataset = io::load_dataset(*cfg.dataset_csv);

  const bool grid_empty = cfg.gammas.empty() || cfg.attacks.empty() || cfg.architectures.empty();
  if (grid_empty) return report;

  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    const std::uint64_t trial_seed = derive_seed(cfg.seed, trial);
    const SyntheticTask task =
        dataset ? task_from_samples(dataset->samples, dataset->n_classes(),
                                    cfg.dataset_test_fraction, derive_seed(trial_seed, 1))
                : make_task(derive_seed(trial_seed, 1), cfg.task);
    const SecretParameters secrets =
        generate_secrets(task.spec.n_classes, derive_seed(trial_seed, 2), cfg.profile);

    std::vector<Architecture> victim_archs;
    for (const auto& pair : cfg.architectures) {
      if (std::find(victim_archs.begin(), victim_archs.end(), pair.victim) == victim_archs.end()) {
        victim_archs.push_back(pair.victim);
      }
    }

    std::uint64_t cell_counter = 100;
    for (const Architecture victim_arch : victim_archs) {
      const auto arch_code = static_cast<std::uint64_t>(victim_arch);
      CampaignRow base;
      base.trial = trial;
      base.victim_arch = victim_arch;

      std::optional<ToyClassifier> victim;
      try {
        victim = train_victim(task, victim_arch, cfg.victim_training,
                              derive_seed(trial_seed, 10 + arch_code));
      } catch (const std::exception& e) {
        for (double gamma : cfg.gammas) {
          CampaignRow row = base;
          row.gamma = gamma;
          row.kind = "surrogate";
          row.error = std::string("victim training failed: ") + e.what();
          report.rows.push_back(std::move(row));
        }
        continue;
      }
      const PredictionFn original = victim->as_api();
      if (log_dir) {
        io::save_weights(*log_dir / ("trial" + std::to_string(trial) + "_victim_" +
                                     to_string(victim_arch) + ".json"),
                         *victim);
        io::save_secrets(*log_dir / ("trial" + std::to_string(trial) + "_secrets.json"), secrets);
      }
      base.victim_accuracy = accuracy(*victim, task.test);
      base.altered_accuracy =
          accuracy(make_altered_api(original, secrets, derive_seed(trial_seed, 20 + arch_code)),
                   task.test);

      for (double gamma : cfg.gammas) {
        const auto queries = attacker_inputs(task, gamma);
        // Surrogates distilled from plain altered responses, shared by the
        // "none" and pruning variants of the same cell.
        std::map<Architecture, ToyClassifier> plain_surrogates;

        for (const auto& pair : cfg.architectures) {
          if (pair.victim != victim_arch) continue;
          for (const auto& attack : cfg.attacks) {
            const std::uint64_t cell_seed = derive_seed(trial_seed, cell_counter++);
            CampaignRow row = base;
            row.gamma = gamma;
            row.kind = "surrogate";
            row.attack = to_string(attack.kind);
            row.suspect_arch = pair.surrogate;
            if (attack.kind == AttackConfig::Kind::pruning) row.kappa = attack.kappa;
            if (attack.kind == AttackConfig::Kind::averaging) row.repeats = attack.repeats;
            try {
              std::optional<ToyClassifier> suspect;
              if (attack.kind == AttackConfig::Kind::averaging) {
                const PredictionFn api = averaging_attack_api(
                    make_altered_api(original, secrets, derive_seed(cell_seed, 1)), attack.repeats);
                suspect = extract_surrogate(api, queries, pair.surrogate, cfg.surrogate_training,
                                            derive_seed(cell_seed, 2));
              } else {
                auto it = plain_surrogates.find(pair.surrogate);
                if (it == plain_surrogates.end()) {
                  const std::uint64_t plain_seed =
                      derive_seed(trial_seed, 1000 + static_cast<std::uint64_t>(gamma * 1e6) * 4 +
                                                  arch_code * 2 +
                                                  static_cast<std::uint64_t>(pair.surrogate));
                  const PredictionFn api =
                      make_altered_api(original, secrets, derive_seed(plain_seed, 1));
                  it = plain_surrogates
                           .emplace(pair.surrogate,
                                    extract_surrogate(api, queries, pair.surrogate,
                                                      cfg.surrogate_training,
                                                      derive_seed(plain_seed, 2)))
                           .first;
                }
                suspect = attack.kind == AttackConfig::Kind::pruning
                              ? prune_model(it->second, attack.kappa)
                              : it->second;
              }
              std::optional<std::filesystem::path> prefix;
              if (log_dir) {
                prefix = *log_dir / ("trial" + std::to_string(trial) + "_cell" +
                                     std::to_string(report.rows.size()));
              }
              const CellOutcome outcome = evaluate_suspect(*suspect, original, secrets, task,
                                                           cfg.verify, derive_seed(cell_seed, 3),
                                                           prefix);
              row.report = outcome.report;
              row.suspect_accuracy = outcome.suspect_accuracy;
            } catch (const std::exception& e) {
              row.error = e.what();
            }
            report.rows.push_back(std::move(row));
          }
        }
      }

      if (cfg.benign) {
        const std::uint64_t cell_seed = derive_seed(trial_seed, 50 + arch_code);
        CampaignRow row = base;
        row.gamma = cfg.benign_gamma;
        row.kind = "benign";
        row.attack = "none";
        row.suspect_arch = victim_arch;
        try {
          const ToyClassifier benign = train_on_fraction(task, cfg.benign_gamma, victim_arch,
                                                         cfg.victim_training,
                                                         derive_seed(cell_seed, 1));
          std::optional<std::filesystem::path> prefix;
          if (log_dir) {
            prefix = *log_dir / ("trial" + std::to_string(trial) + "_benign_" +
                                 to_string(victim_arch));
          }
          const CellOutcome outcome = evaluate_suspect(benign, original, secrets, task, cfg.verify,
                                                       derive_seed(cell_seed, 3), prefix);
          row.report = outcome.report;
          row.suspect_accuracy = outcome.suspect_accuracy;
        } catch (const std::exception& e) {
          row.error = e.what();
        }
        report.rows.push_back(std::move(row));
      }
    }
  }

  if (out_dir) {
    io::write_file_atomic(*out_dir / "campaign.csv", io::format_campaign_csv(report));
    io::write_file_atomic(*out_dir / "campaign.json", io::format_campaign_json(report));
  }
  return report;
}

}  // namespace dynamarks
