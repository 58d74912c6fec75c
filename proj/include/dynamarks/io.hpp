#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dynamarks/core.hpp"
#include "dynamarks/simkit.hpp"
#include "dynamarks/verify.hpp"

namespace dynamarks::io {

// Simplex tolerance applied to vectors read from files. Looser than the
// internal tolerance because third-party logs may print fewer digits.
inline constexpr double kIngestTolerance = 1e-6;

// Every load failure surfaces as exactly one SchemaError.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(std::string file_kind, std::string location, std::string message);

  const std::string& file_kind() const { return kind_; }
  const std::string& location() const { return location_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string kind_;
  std::string location_;
  std::string detail_;
};

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// Writes `contents` to a sibling temporary file and renames it over `path`, so
// readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path, const std::string& file_kind);

// --- secret parameters (JSON) ------------------------------------------------
std::string format_secrets(const SecretParameters& params);
// Structural schema only; invariants are checked separately by validate_secrets.
SecretParameters parse_secrets(std::string_view text);
void save_secrets(const std::filesystem::path& path, const SecretParameters& params);
// Also runs validate_secrets and reports violations as a SchemaError.
SecretParameters load_secrets(const std::filesystem::path& path);

// --- response log (CSV) ------------------------------------------------------
// Header: query_id,true_label,p_0,...,p_{N-1}. true_label is -1 when unknown.
struct ResponseLogRow {
  std::int64_t query_id = 0;
  std::int64_t true_label = -1;
  std::vector<double> probs;

  friend bool operator==(const ResponseLogRow&, const ResponseLogRow&) = default;
};

struct ResponseLog {
  std::size_t n_classes = 0;
  std::vector<ResponseLogRow> rows;

  friend bool operator==(const ResponseLog&, const ResponseLog&) = default;
};

std::string response_log_header(std::size_t n_classes);
std::string format_response_row(const ResponseLogRow& row);
std::string format_response_log(const ResponseLog& log);
ResponseLog parse_response_log(std::string_view text);
void save_response_log(const std::filesystem::path& path, const ResponseLog& log);
ResponseLog load_response_log(const std::filesystem::path& path);

// Response matrix from a log. Every row must carry a true label.
ResponseMatrix response_matrix_from_log(const ResponseLog& log);

// --- model weights (JSON) ----------------------------------------------------
std::string format_weights(const ToyClassifier& model);
ToyClassifier parse_weights(std::string_view text);
void save_weights(const std::filesystem::path& path, const ToyClassifier& model);
ToyClassifier load_weights(const std::filesystem::path& path);

// --- dataset (CSV) -----------------------------------------------------------
// Header: f_0,...,f_{M-1},label.
struct Dataset {
  std::size_t feature_dim = 0;
  std::vector<LabeledSample> samples;

  std::size_t n_classes() const;
};

std::string format_dataset(const Dataset& data);
Dataset parse_dataset(std::string_view text);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

// --- verification report (JSON) ---------------------------------------------
// eta is written as null when it is not finite; `status` disambiguates.
std::string format_report(const VerificationReport& report);
VerificationReport parse_report(std::string_view text);
void save_report(const std::filesystem::path& path, const VerificationReport& report);
VerificationReport load_report(const std::filesystem::path& path);

// --- campaign config and report ---------------------------------------------
// Every key is optional and defaults to CampaignConfig's value; unknown keys
// are rejected. Relative dataset_csv paths resolve against `base_dir`.
CampaignConfig parse_campaign_config(std::string_view text,
                                     const std::filesystem::path& base_dir = {});
CampaignConfig load_campaign_config(const std::filesystem::path& path);

std::string format_campaign_csv(const CampaignReport& report);
std::string format_campaign_json(const CampaignReport& report);

}  // namespace dynamarks::io
