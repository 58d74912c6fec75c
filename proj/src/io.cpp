#include "dynamarks/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"

namespace dynamarks::io {

using nlohmann::json;

SchemaError::SchemaError(std::string file_kind, std::string location, std::string message)
    : std::runtime_error(file_kind + " @ " + location + ": " + message),
      kind_(std::move(file_kind)),
      location_(std::move(location)),
      detail_(std::move(message)) {}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, end);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw std::runtime_error("write to " + tmp.string() + " failed");
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path, const std::string& file_kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError(file_kind, path.string(), "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

// ---- JSON helpers ----

json parse_json(std::string_view text, const std::string& kind) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw SchemaError(kind, "byte " + std::to_string(e.byte), "malformed JSON");
  }
}

const json& field(const json& obj, const char* key, const std::string& kind,
                  const std::string& path) {
  if (!obj.is_object()) throw SchemaError(kind, path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(kind, path + "." + key, "missing field");
  return *it;
}

double number(const json& v, const std::string& kind, const std::string& path) {
  if (!v.is_number()) throw SchemaError(kind, path, "expected a number");
  return v.get<double>();
}

std::uint64_t unsigned_int(const json& v, const std::string& kind, const std::string& path) {
  if (!v.is_number_unsigned()) throw SchemaError(kind, path, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::vector<double> number_array(const json& v, const std::string& kind,
                                 const std::string& path) {
  if (!v.is_array()) throw SchemaError(kind, path, "expected an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    out.push_back(number(v[k], kind, path + "[" + std::to_string(k) + "]"));
  }
  return out;
}

// ---- CSV helpers ----

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  // Trailing blank lines carry no rows.
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t end = line.find(',', start);
    if (end == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, end - start));
    start = end + 1;
  }
  for (auto& f : fields) {
    while (!f.empty() && f.front() == ' ') f.remove_prefix(1);
    while (!f.empty() && f.back() == ' ') f.remove_suffix(1);
  }
  return fields;
}

double parse_csv_double(std::string_view s, const std::string& kind, const std::string& where) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw SchemaError(kind, where, "not a number: '" + std::string(s) + "'");
  }
  if (!std::isfinite(v)) throw SchemaError(kind, where, "non-finite value");
  return v;
}

std::int64_t parse_csv_int(std::string_view s, const std::string& kind, const std::string& where) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw SchemaError(kind, where, "not an integer: '" + std::string(s) + "'");
  }
  return v;
}

std::string row_location(std::size_t line_index) {
  // Line numbers are 1-based and include the header.
  return "row " + std::to_string(line_index + 1);
}

}  // namespace

// ---------------------------------------------------------------------------
// Secrets

std::string format_secrets(const SecretParameters& params) {
  json j;
  j["n_classes"] = params.n_classes;
  j["seed"] = params.seed;
  json per = json::array();
  for (const auto& cs : params.per_class) {
    per.push_back({{"v", cs.v}, {"alpha", cs.alpha}, {"beta", cs.beta}, {"a", cs.a}, {"b", cs.b}});
  }
  j["per_class"] = std::move(per);
  return j.dump(2) + "\n";
}

SecretParameters parse_secrets(std::string_view text) {
  const std::string kind = "secrets";
  const json j = parse_json(text, kind);
  SecretParameters p;
  p.n_classes = unsigned_int(field(j, "n_classes", kind, "$"), kind, "$.n_classes");
  p.seed = unsigned_int(field(j, "seed", kind, "$"), kind, "$.seed");
  const json& per = field(j, "per_class", kind, "$");
  if (!per.is_array()) throw SchemaError(kind, "$.per_class", "expected an array");
  for (std::size_t i = 0; i < per.size(); ++i) {
    const std::string path = "$.per_class[" + std::to_string(i) + "]";
    const json& e = per[i];
    ClassSecrets cs;
    cs.v = number_array(field(e, "v", kind, path), kind, path + ".v");
    cs.alpha = number(field(e, "alpha", kind, path), kind, path + ".alpha");
    cs.beta = number(field(e, "beta", kind, path), kind, path + ".beta");
    cs.a = number(field(e, "a", kind, path), kind, path + ".a");
    cs.b = number(field(e, "b", kind, path), kind, path + ".b");
    p.per_class.push_back(std::move(cs));
  }
  return p;
}

void save_secrets(const std::filesystem::path& path, const SecretParameters& params) {
  write_file_atomic(path, format_secrets(params));
}

SecretParameters load_secrets(const std::filesystem::path& path) {
  SecretParameters p = parse_secrets(read_file(path, "secrets"));
  if (auto check = validate_secrets(p); !check.ok()) {
    throw SchemaError("secrets", path.string(), check.message());
  }
  return p;
}

// ---------------------------------------------------------------------------
// Response log

std::string response_log_header(std::size_t n_classes) {
  std::string h = "query_id,true_label";
  for (std::size_t k = 0; k < n_classes; ++k) h += ",p_" + std::to_string(k);
  return h;
}

std::string format_response_row(const ResponseLogRow& row) {
  std::string s = std::to_string(row.query_id) + "," + std::to_string(row.true_label);
  for (double v : row.probs) {
    s += ',';
    s += format_double(v);
  }
  return s;
}

std::string format_response_log(const ResponseLog& log) {
  std::string out = response_log_header(log.n_classes) + "\n";
  for (const auto& row : log.rows) {
    if (row.probs.size() != log.n_classes) {
      throw std::invalid_argument("response log row width does not match n_classes");
    }
    out += format_response_row(row);
    out += '\n';
  }
  return out;
}

ResponseLog parse_response_log(std::string_view text) {
  const std::string kind = "response-log";
  const auto lines = split_lines(text);
  if (lines.empty()) throw SchemaError(kind, row_location(0), "missing header");
  const auto header = split_fields(lines[0]);
  if (header.size() < 4) {
    throw SchemaError(kind, row_location(0), "header needs query_id,true_label and >= 2 columns");
  }
  const std::size_t n = header.size() - 2;
  if (std::string(response_log_header(n)) != std::string(lines[0])) {
    throw SchemaError(kind, row_location(0),
                      "expected header '" + response_log_header(n) + "'");
  }

  ResponseLog log;
  log.n_classes = n;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string where = row_location(li);
    const auto fields = split_fields(lines[li]);
    if (fields.size() != n + 2) {
      throw SchemaError(kind, where, "expected " + std::to_string(n + 2) + " fields, got " +
                                         std::to_string(fields.size()));
    }
    ResponseLogRow row;
    row.query_id = parse_csv_int(fields[0], kind, where + ", query_id");
    row.true_label = parse_csv_int(fields[1], kind, where + ", true_label");
    if (row.true_label < -1 || row.true_label >= static_cast<std::int64_t>(n)) {
      throw SchemaError(kind, where + ", true_label", "label out of range");
    }
    row.probs.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
      row.probs.push_back(parse_csv_double(fields[k + 2], kind, where + ", p_" + std::to_string(k)));
    }
    if (auto why = simplex_violation(row.probs, kIngestTolerance); !why.empty()) {
      throw SchemaError(kind, where, why);
    }
    log.rows.push_back(std::move(row));
  }
  return log;
}

void save_response_log(const std::filesystem::path& path, const ResponseLog& log) {
  write_file_atomic(path, format_response_log(log));
}

ResponseLog load_response_log(const std::filesystem::path& path) {
  try {
    return parse_response_log(read_file(path, "response-log"));
  } catch (const SchemaError& e) {
    throw SchemaError(e.file_kind(), path.string() + ", " + e.location(), e.detail());
  }
}

ResponseMatrix response_matrix_from_log(const ResponseLog& log) {
  ResponseMatrix m(log.n_classes);
  for (std::size_t r = 0; r < log.rows.size(); ++r) {
    const auto& row = log.rows[r];
    if (row.true_label < 0) {
      throw SchemaError("response-log", row_location(r + 1),
                        "verification requires a true_label on every row");
    }
    m.append(ClassIndex{static_cast<std::size_t>(row.true_label)}, row.probs);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Weights

std::string format_weights(const ToyClassifier& model) {
  json j;
  j["arch"] = to_string(model.architecture());
  json tensors = json::array();
  for (const auto& t : model.tensors()) tensors.push_back({{"shape", t.shape}, {"data", t.data}});
  j["tensors"] = std::move(tensors);
  return j.dump() + "\n";
}

ToyClassifier parse_weights(std::string_view text) {
  const std::string kind = "weights";
  const json j = parse_json(text, kind);
  const json& arch_field = field(j, "arch", kind, "$");
  if (!arch_field.is_string()) throw SchemaError(kind, "$.arch", "expected a string");
  Architecture arch;
  try {
    arch = parse_architecture(arch_field.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw SchemaError(kind, "$.arch", e.what());
  }
  const json& ts = field(j, "tensors", kind, "$");
  if (!ts.is_array()) throw SchemaError(kind, "$.tensors", "expected an array");
  std::vector<Tensor> tensors;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const std::string path = "$.tensors[" + std::to_string(k) + "]";
    Tensor t;
    const json& shape = field(ts[k], "shape", kind, path);
    if (!shape.is_array()) throw SchemaError(kind, path + ".shape", "expected an array");
    std::size_t expected = 1;
    for (std::size_t d = 0; d < shape.size(); ++d) {
      t.shape.push_back(unsigned_int(shape[d], kind, path + ".shape[" + std::to_string(d) + "]"));
      expected *= t.shape.back();
    }
    t.data = number_array(field(ts[k], "data", kind, path), kind, path + ".data");
    if (t.data.size() != expected) {
      throw SchemaError(kind, path, "data length does not match shape");
    }
    tensors.push_back(std::move(t));
  }
  try {
    return ToyClassifier(arch, std::move(tensors));
  } catch (const std::invalid_argument& e) {
    throw SchemaError(kind, "$.tensors", e.what());
  }
}

void save_weights(const std::filesystem::path& path, const ToyClassifier& model) {
  write_file_atomic(path, format_weights(model));
}

ToyClassifier load_weights(const std::filesystem::path& path) {
  return parse_weights(read_file(path, "weights"));
}

// ---------------------------------------------------------------------------
// Dataset

std::size_t Dataset::n_classes() const {
  std::size_t n = 0;
  for (const auto& s : samples) n = std::max(n, s.label.value + 1);
  return n;
}

std::string format_dataset(const Dataset& data) {
  std::string out;
  for (std::size_t k = 0; k < data.feature_dim; ++k) out += "f_" + std::to_string(k) + ",";
  out += "label\n";
  for (const auto& s : data.samples) {
    if (s.input.size() != data.feature_dim) {
      throw std::invalid_argument("dataset sample width does not match feature_dim");
    }
    for (double v : s.input) {
      out += format_double(v);
      out += ',';
    }
    out += std::to_string(s.label.value);
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(std::string_view text) {
  const std::string kind = "dataset";
  const auto lines = split_lines(text);
  if (lines.empty()) throw SchemaError(kind, row_location(0), "missing header");
  const auto header = split_fields(lines[0]);
  if (header.size() < 2 || header.back() != "label") {
    throw SchemaError(kind, row_location(0), "header must be f_0,...,f_{M-1},label");
  }
  Dataset data;
  data.feature_dim = header.size() - 1;
  for (std::size_t k = 0; k < data.feature_dim; ++k) {
    if (header[k] != "f_" + std::to_string(k)) {
      throw SchemaError(kind, row_location(0) + ", column " + std::to_string(k),
                        "expected f_" + std::to_string(k));
    }
  }
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const std::string where = row_location(li);
    const auto fields = split_fields(lines[li]);
    if (fields.size() != header.size()) throw SchemaError(kind, where, "wrong number of fields");
    LabeledSample s;
    for (std::size_t k = 0; k < data.feature_dim; ++k) {
      s.input.push_back(parse_csv_double(fields[k], kind, where + ", f_" + std::to_string(k)));
    }
    const auto label = parse_csv_int(fields.back(), kind, where + ", label");
    if (label < 0) throw SchemaError(kind, where + ", label", "negative label");
    s.label = ClassIndex{static_cast<std::size_t>(label)};
    data.samples.push_back(std::move(s));
  }
  return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  write_file_atomic(path, format_dataset(data));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path, "dataset"));
}

// ---------------------------------------------------------------------------
// Verification report

namespace {

json report_json(const VerificationReport& r) {
  json j;
  j["delta_org_sm"] = r.delta_org_sm;
  j["delta_alt_sm"] = r.delta_alt_sm;
  j["eta"] = std::isfinite(r.eta) ? json(r.eta) : json(nullptr);
  j["tau"] = r.tau;
  j["detected"] = r.detected;
  j["skipped_cells"] = r.skipped_cells;
  j["bin_count"] = r.bin_count;
  j["smoothing_epsilon"] = r.smoothing_epsilon;
  j["status"] = to_string(r.status);
  return j;
}

VerificationStatus parse_status(const std::string& s) {
  for (auto st : {VerificationStatus::detected, VerificationStatus::not_detected,
                  VerificationStatus::degenerate_detected, VerificationStatus::inconclusive}) {
    if (to_string(st) == s) return st;
  }
  throw SchemaError("report", "$.status", "unknown status '" + s + "'");
}

}  // namespace

std::string format_report(const VerificationReport& report) {
  return report_json(report).dump(2) + "\n";
}

VerificationReport parse_report(std::string_view text) {
  const std::string kind = "report";
  const json j = parse_json(text, kind);
  VerificationReport r;
  r.delta_org_sm = number(field(j, "delta_org_sm", kind, "$"), kind, "$.delta_org_sm");
  r.delta_alt_sm = number(field(j, "delta_alt_sm", kind, "$"), kind, "$.delta_alt_sm");
  r.tau = number(field(j, "tau", kind, "$"), kind, "$.tau");
  const json& det = field(j, "detected", kind, "$");
  if (!det.is_boolean()) throw SchemaError(kind, "$.detected", "expected a boolean");
  r.detected = det.get<bool>();
  r.skipped_cells = unsigned_int(field(j, "skipped_cells", kind, "$"), kind, "$.skipped_cells");
  r.bin_count = unsigned_int(field(j, "bin_count", kind, "$"), kind, "$.bin_count");
  r.smoothing_epsilon =
      number(field(j, "smoothing_epsilon", kind, "$"), kind, "$.smoothing_epsilon");
  const json& st = field(j, "status", kind, "$");
  if (!st.is_string()) throw SchemaError(kind, "$.status", "expected a string");
  r.status = parse_status(st.get<std::string>());
  const json& eta = field(j, "eta", kind, "$");
  if (eta.is_null()) {
    if (r.status == VerificationStatus::degenerate_detected) {
      r.eta = std::numeric_limits<double>::infinity();
    } else if (r.status == VerificationStatus::inconclusive) {
      r.eta = std::numeric_limits<double>::quiet_NaN();
    } else {
      throw SchemaError(kind, "$.eta", "null eta requires a degenerate or inconclusive status");
    }
  } else {
    r.eta = number(eta, kind, "$.eta");
  }
  return r;
}

void save_report(const std::filesystem::path& path, const VerificationReport& report) {
  write_file_atomic(path, format_report(report));
}

VerificationReport load_report(const std::filesystem::path& path) {
  return parse_report(read_file(path, "report"));
}

// ---------------------------------------------------------------------------
// Campaign config

namespace {

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& path) {
  const std::string kind = "campaign-config";
  if (!obj.is_object()) throw SchemaError(kind, path, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* a : allowed) known = known || it.key() == a;
    if (!known) throw SchemaError(kind, path + "." + it.key(), "unknown key");
  }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& out, const std::string& path) {
  const std::string kind = "campaign-config";
  auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string where = path + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw SchemaError(kind, where, "expected a boolean");
    out = it->template get<bool>();
  } else if constexpr (std::is_integral_v<T>) {
    out = static_cast<T>(unsigned_int(*it, kind, where));
  } else if constexpr (std::is_same_v<T, double>) {
    out = number(*it, kind, where);
  } else {
    if (!it->is_string()) throw SchemaError(kind, where, "expected a string");
    out = it->template get<std::string>();
  }
}

TrainConfig parse_training(const json& j, const std::string& path, TrainConfig cfg) {
  reject_unknown(j, {"epochs", "learning_rate", "batch_size", "hidden_units"}, path);
  read_opt(j, "epochs", cfg.epochs, path);
  read_opt(j, "learning_rate", cfg.learning_rate, path);
  read_opt(j, "batch_size", cfg.batch_size, path);
  read_opt(j, "hidden_units", cfg.hidden_units, path);
  return cfg;
}

Architecture arch_field(const json& obj, const char* key, const std::string& path) {
  std::string tag = "softmax-linear";
  read_opt(obj, key, tag, path);
  try {
    return parse_architecture(tag);
  } catch (const std::invalid_argument& e) {
    throw SchemaError("campaign-config", path + "." + key, e.what());
  }
}

}  // namespace

CampaignConfig parse_campaign_config(std::string_view text, const std::filesystem::path& base_dir) {
  const std::string kind = "campaign-config";
  const json j = parse_json(text, kind);
  reject_unknown(j,
                 {"seed", "trials", "task", "dataset_csv", "dataset_test_fraction",
                  "victim_training", "surrogate_training", "profile", "verify", "gammas",
                  "attacks", "architectures", "benign", "benign_gamma", "write_logs"},
                 "$");
  CampaignConfig cfg;
  read_opt(j, "seed", cfg.seed, "$");
  read_opt(j, "trials", cfg.trials, "$");
  if (auto it = j.find("task"); it != j.end()) {
    reject_unknown(*it,
                   {"n_classes", "feature_dim", "train_size", "test_size", "separation",
                    "covariance_scale"},
                   "$.task");
    read_opt(*it, "n_classes", cfg.task.n_classes, "$.task");
    read_opt(*it, "feature_dim", cfg.task.feature_dim, "$.task");
    read_opt(*it, "train_size", cfg.task.train_size, "$.task");
    read_opt(*it, "test_size", cfg.task.test_size, "$.task");
    read_opt(*it, "separation", cfg.task.separation, "$.task");
    read_opt(*it, "covariance_scale", cfg.task.covariance_scale, "$.task");
  }
  if (j.contains("dataset_csv")) {
    std::string p;
    read_opt(j, "dataset_csv", p, "$");
    std::filesystem::path path(p);
    cfg.dataset_csv = path.is_relative() ? base_dir / path : path;
  }
  read_opt(j, "dataset_test_fraction", cfg.dataset_test_fraction, "$");
  if (auto it = j.find("victim_training"); it != j.end()) {
    cfg.victim_training = parse_training(*it, "$.victim_training", cfg.victim_training);
  }
  if (auto it = j.find("surrogate_training"); it != j.end()) {
    cfg.surrogate_training = parse_training(*it, "$.surrogate_training", cfg.surrogate_training);
  }
  if (auto it = j.find("profile"); it != j.end()) {
    reject_unknown(*it, {"alpha", "beta", "a", "b", "vector_rule"}, "$.profile");
    read_opt(*it, "alpha", cfg.profile.alpha, "$.profile");
    read_opt(*it, "beta", cfg.profile.beta, "$.profile");
    read_opt(*it, "a", cfg.profile.a, "$.profile");
    read_opt(*it, "b", cfg.profile.b, "$.profile");
    std::string rule = "boosted_single";
    read_opt(*it, "vector_rule", rule, "$.profile");
    if (rule == "boosted_single") {
      cfg.profile.vector_rule = VectorRule::boosted_single;
    } else if (rule == "uniform") {
      cfg.profile.vector_rule = VectorRule::uniform;
    } else {
      throw SchemaError(kind, "$.profile.vector_rule", "expected boosted_single or uniform");
    }
  }
  if (auto it = j.find("verify"); it != j.end()) {
    reject_unknown(*it, {"tau", "bins", "smoothing_epsilon"}, "$.verify");
    read_opt(*it, "tau", cfg.verify.tau, "$.verify");
    read_opt(*it, "bins", cfg.verify.bin_count, "$.verify");
    read_opt(*it, "smoothing_epsilon", cfg.verify.smoothing_epsilon, "$.verify");
  }
  if (auto it = j.find("gammas"); it != j.end()) cfg.gammas = number_array(*it, kind, "$.gammas");
  if (auto it = j.find("attacks"); it != j.end()) {
    if (!it->is_array()) throw SchemaError(kind, "$.attacks", "expected an array");
    cfg.attacks.clear();
    for (std::size_t k = 0; k < it->size(); ++k) {
      const std::string path = "$.attacks[" + std::to_string(k) + "]";
      const json& a = (*it)[k];
      reject_unknown(a, {"kind", "repeats", "kappa"}, path);
      AttackConfig attack;
      std::string kind_tag = "none";
      read_opt(a, "kind", kind_tag, path);
      if (kind_tag == "none") {
        attack.kind = AttackConfig::Kind::none;
      } else if (kind_tag == "averaging") {
        attack.kind = AttackConfig::Kind::averaging;
      } else if (kind_tag == "pruning") {
        attack.kind = AttackConfig::Kind::pruning;
      } else {
        throw SchemaError(kind, path + ".kind", "expected none, averaging or pruning");
      }
      read_opt(a, "repeats", attack.repeats, path);
      read_opt(a, "kappa", attack.kappa, path);
      cfg.attacks.push_back(attack);
    }
  }
  if (auto it = j.find("architectures"); it != j.end()) {
    if (!it->is_array()) throw SchemaError(kind, "$.architectures", "expected an array");
    cfg.architectures.clear();
    for (std::size_t k = 0; k < it->size(); ++k) {
      const std::string path = "$.architectures[" + std::to_string(k) + "]";
      reject_unknown((*it)[k], {"victim", "surrogate"}, path);
      cfg.architectures.push_back(
          {arch_field((*it)[k], "victim", path), arch_field((*it)[k], "surrogate", path)});
    }
  }
  read_opt(j, "benign", cfg.benign, "$");
  read_opt(j, "benign_gamma", cfg.benign_gamma, "$");
  read_opt(j, "write_logs", cfg.write_logs, "$");

  try {
    validate_campaign(cfg);
  } catch (const std::invalid_argument& e) {
    throw SchemaError(kind, "$", e.what());
  }
  return cfg;
}

CampaignConfig load_campaign_config(const std::filesystem::path& path) {
  return parse_campaign_config(read_file(path, "campaign-config"), path.parent_path());
}

// ---------------------------------------------------------------------------
// Campaign report

std::string format_campaign_csv(const CampaignReport& report) {
  std::string out =
      "trial,gamma,kind,attack,kappa,repeats,victim_arch,suspect_arch,victim_accuracy,"
      "altered_accuracy,suspect_accuracy,delta_org_sm,delta_alt_sm,eta,detected,status,error\n";
  for (const auto& r : report.rows) {
    std::ostringstream os;
    os << r.trial << ',' << format_double(r.gamma) << ',' << r.kind << ',' << r.attack << ','
       << format_double(r.kappa) << ',' << r.repeats << ',' << to_string(r.victim_arch) << ','
       << to_string(r.suspect_arch) << ',' << format_double(r.victim_accuracy) << ','
       << format_double(r.altered_accuracy) << ',' << format_double(r.suspect_accuracy) << ',';
    if (r.report) {
      os << format_double(r.report->delta_org_sm) << ',' << format_double(r.report->delta_alt_sm)
         << ',' << format_double(r.report->eta) << ',' << (r.report->detected ? 1 : 0) << ','
         << to_string(r.report->status) << ',';
    } else {
      os << ",,,,,";
    }
    std::string err = r.error;
    for (char& c : err) {
      if (c == ',' || c == '\n') c = ';';
    }
    os << err << '\n';
    out += os.str();
  }
  return out;
}

std::string format_campaign_json(const CampaignReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json j;
    j["trial"] = r.trial;
    j["gamma"] = r.gamma;
    j["kind"] = r.kind;
    j["attack"] = r.attack;
    j["kappa"] = r.kappa;
    j["repeats"] = r.repeats;
    j["victim_arch"] = to_string(r.victim_arch);
    j["suspect_arch"] = to_string(r.suspect_arch);
    j["victim_accuracy"] = r.victim_accuracy;
    j["altered_accuracy"] = r.altered_accuracy;
    j["suspect_accuracy"] = r.suspect_accuracy;
    j["report"] = r.report ? report_json(*r.report) : json(nullptr);
    if (!r.error.empty()) j["error"] = r.error;
    rows.push_back(std::move(j));
  }

  std::size_t surrogate_cells = 0, surrogate_detected = 0, benign_cells = 0, benign_detected = 0,
              failed = 0;
  for (const auto& r : report.rows) {
    if (!r.report) {
      ++failed;
      continue;
    }
    if (r.kind == "benign") {
      ++benign_cells;
      benign_detected += r.report->detected ? 1 : 0;
    } else {
      ++surrogate_cells;
      surrogate_detected += r.report->detected ? 1 : 0;
    }
  }
  json summary = {{"surrogate_cells", surrogate_cells},
                  {"surrogate_detected", surrogate_detected},
                  {"benign_cells", benign_cells},
                  {"benign_detected", benign_detected},
                  {"failed_cells", failed}};
  return json{{"summary", summary}, {"rows", rows}}.dump(2) + "\n";
}

}  // namespace dynamarks::io
