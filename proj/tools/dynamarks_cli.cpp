// dynamarks: command-line front end for secret generation, response-log
// perturbation, watermark verification, extraction campaigns, pruning and the
// watermarking proxy.
//
// Exit codes: 0 success / watermark detected, 1 runtime failure,
// 2 usage or input error, 3 watermark not detected, 4 inconclusive.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "dynamarks/core.hpp"
#include "dynamarks/io.hpp"
#include "dynamarks/perturb.hpp"
#include "dynamarks/proxy.hpp"
#include "dynamarks/simkit.hpp"
#include "dynamarks/verify.hpp"

namespace fs = std::filesystem;
using namespace dynamarks;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNotDetected = 3;
constexpr int kExitInconclusive = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void refuse_overwrite(const fs::path& out, bool force) {
  if (!force && fs::exists(out)) {
    throw UsageError(out.string() + " exists; pass --force to overwrite");
  }
}

// --- keygen ---------------------------------------------------------------

struct KeygenArgs {
  std::size_t classes = 0;
  std::uint64_t seed = 0;
  fs::path out;
  ParameterProfile profile;
  bool uniform = false;
  bool force = false;
};

int run_keygen(const KeygenArgs& a) {
  refuse_overwrite(a.out, a.force);
  ParameterProfile profile = a.profile;
  if (a.uniform) profile.vector_rule = VectorRule::uniform;
  if (a.classes < 2) throw UsageError("--classes must be >= 2");
  if (auto check = validate_profile(profile); !check.ok()) throw UsageError(check.message());
  const SecretParameters params = generate_secrets(a.classes, a.seed, profile);
  if (auto check = validate_secrets(params); !check.ok()) {
    throw std::runtime_error("generated secrets failed validation: " + check.message());
  }
  io::save_secrets(a.out, params);
  std::cerr << "wrote " << a.out.string() << " (" << a.classes << " classes)\n";
  return kExitOk;
}

// --- perturb-log ----------------------------------------------------------

struct PerturbLogArgs {
  fs::path in;
  fs::path secrets;
  std::uint64_t seed = 0;
  fs::path out;
  bool force = false;
};

int run_perturb_log(const PerturbLogArgs& a) {
  refuse_overwrite(a.out, a.force);
  const io::ResponseLog original = io::load_response_log(a.in);
  const SecretParameters secrets = io::load_secrets(a.secrets);
  if (secrets.n_classes != original.n_classes) {
    throw UsageError("log has " + std::to_string(original.n_classes) + " classes, secrets have " +
                     std::to_string(secrets.n_classes));
  }
  const Perturber perturber(secrets);
  Rng rng(a.seed);
  io::ResponseLog altered;
  altered.n_classes = original.n_classes;
  std::size_t applied = 0;
  for (const auto& row : original.rows) {
    const ProbabilityVector p(row.probs, io::kIngestTolerance);
    const AlteredResponse r = perturber.alter(p, rng);
    applied += r.record.applied ? 1 : 0;
    altered.rows.push_back({row.query_id, row.true_label, r.probs.components()});
  }
  io::save_response_log(a.out, altered);
  std::cerr << "altered " << applied << " of " << original.rows.size() << " responses\n";
  return kExitOk;
}

// --- verify ---------------------------------------------------------------

struct VerifyArgs {
  fs::path suspect;
  fs::path original;
  fs::path altered;
  VerifyOptions options;
  std::optional<fs::path> out;
};

int run_verify(const VerifyArgs& a) {
  const io::ResponseLog sm = io::load_response_log(a.suspect);
  const io::ResponseLog org = io::load_response_log(a.original);
  const io::ResponseLog alt = io::load_response_log(a.altered);
  if (sm.n_classes != org.n_classes || sm.n_classes != alt.n_classes) {
    throw UsageError("response logs disagree on the number of classes");
  }
  if (sm.rows.empty()) throw UsageError("suspect log has no rows");
  if (!(a.options.tau > 0.0)) throw UsageError("--tau must be > 0");
  if (a.options.bin_count < 2) throw UsageError("--bins must be >= 2");
  if (!(a.options.smoothing_epsilon >= 0.0)) throw UsageError("--epsilon must be >= 0");

  const VerificationReport report =
      verify_matrices(io::response_matrix_from_log(sm), io::response_matrix_from_log(org),
                      io::response_matrix_from_log(alt), a.options);
  const std::string json = io::format_report(report);
  std::cout << json;
  if (a.out) io::save_report(*a.out, report);

  switch (report.status) {
    case VerificationStatus::detected:
    case VerificationStatus::degenerate_detected:
      return kExitOk;
    case VerificationStatus::not_detected:
      return kExitNotDetected;
    case VerificationStatus::inconclusive:
      return kExitInconclusive;
  }
  return kExitFailure;
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::optional<fs::path> config;
  fs::path out;
};

void print_summary(const CampaignReport& report) {
  std::printf("%-5s %-5s %-9s %-10s %-5s %-16s %-16s %-7s %-8s %-8s %-7s %s\n", "trial", "gamma",
              "kind", "attack", "kappa", "victim", "suspect", "acc", "d_org", "d_alt", "eta",
              "detected");
  for (const auto& r : report.rows) {
    if (!r.report) {
      std::printf("%-5zu %-5.2f %-9s %-10s FAILED: %s\n", r.trial, r.gamma, r.kind.c_str(),
                  r.attack.c_str(), r.error.c_str());
      continue;
    }
    std::printf("%-5zu %-5.2f %-9s %-10s %-5.2f %-16s %-16s %-7.3f %-8.3f %-8.3f %-7.3f %s\n",
                r.trial, r.gamma, r.kind.c_str(), r.attack.c_str(), r.kappa,
                to_string(r.victim_arch).c_str(), to_string(r.suspect_arch).c_str(),
                r.suspect_accuracy, r.report->delta_org_sm, r.report->delta_alt_sm, r.report->eta,
                r.report->detected ? "yes" : "no");
  }

  // Per (kind, attack, kappa, gamma) detection counts.
  std::map<std::string, std::pair<std::size_t, std::size_t>> groups;
  for (const auto& r : report.rows) {
    if (!r.report) continue;
    char key[128];
    std::snprintf(key, sizeof key, "%s %s kappa=%.2f gamma=%.2f %s->%s", r.kind.c_str(),
                  r.attack.c_str(), r.kappa, r.gamma, to_string(r.victim_arch).c_str(),
                  to_string(r.suspect_arch).c_str());
    auto& g = groups[key];
    g.first += r.report->detected ? 1 : 0;
    g.second += 1;
  }
  if (!groups.empty()) std::printf("\ndetections per cell group:\n");
  for (const auto& [key, g] : groups) std::printf("  %-70s %zu/%zu\n", key.c_str(), g.first, g.second);
}

int run_simulate(const SimulateArgs& a) {
  CampaignConfig cfg;
  if (a.config) {
    try {
      cfg = io::load_campaign_config(*a.config);
    } catch (const io::SchemaError& e) {
      throw UsageError(e.what());
    }
  }
  const CampaignReport report = run_campaign(cfg, a.out);
  print_summary(report);
  std::cerr << "wrote " << (a.out / "campaign.csv").string() << " and "
            << (a.out / "campaign.json").string() << "\n";
  return kExitOk;
}

// --- prune ----------------------------------------------------------------

struct PruneArgs {
  fs::path model;
  double kappa = 0.1;
  fs::path out;
  bool force = false;
};

int run_prune(const PruneArgs& a) {
  refuse_overwrite(a.out, a.force);
  if (!(a.kappa >= 0.0 && a.kappa < 1.0)) throw UsageError("--kappa must lie in [0, 1)");
  io::save_weights(a.out, prune_model(io::load_weights(a.model), a.kappa));
  return kExitOk;
}

// --- serve ----------------------------------------------------------------

struct ServeArgs {
  std::optional<fs::path> config;
  std::string upstream;
  fs::path secrets;
  std::string listen = "127.0.0.1:8080";
  std::optional<fs::path> log;
  std::string seed_mode = "entropy";
};

int run_serve(const ServeArgs& a) {
  proxy::ProxyConfig cfg;
  std::optional<fs::path> config_path = a.config;
  if (!config_path) {
    if (const char* env = std::getenv("DYNAMARKS_PROXY_CONFIG"); env && *env) config_path = env;
  }
  if (config_path) {
    try {
      cfg = proxy::load_proxy_config(*config_path);
    } catch (const io::SchemaError& e) {
      throw UsageError(e.what());
    }
  } else {
    if (a.upstream.empty() || a.secrets.empty()) {
      throw UsageError("serve needs --config (or DYNAMARKS_PROXY_CONFIG) or --upstream and --secrets");
    }
    cfg.upstream = a.upstream;
    cfg.secrets_path = a.secrets;
    cfg.listen_address = a.listen;
    cfg.log_path = a.log;
    try {
      cfg.seed_mode = proxy::parse_seed_mode(a.seed_mode);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  std::cerr << "proxy listening on " << cfg.listen_address << " -> " << cfg.upstream << "\n";
  proxy::serve(cfg);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic watermarking of prediction APIs against model extraction"};
  app.require_subcommand(1);

  KeygenArgs keygen;
  auto* kg = app.add_subcommand("keygen", "Generate secret watermark parameters");
  kg->add_option("--classes", keygen.classes, "Number of classes N (>= 2)")->required();
  kg->add_option("--seed", keygen.seed, "Seed for the boosted index of each secret vector")->required();
  kg->add_option("--out", keygen.out, "Output secrets JSON")->required();
  kg->add_option("--alpha", keygen.profile.alpha, "Lower edge of the alteration window")->capture_default_str();
  kg->add_option("--beta", keygen.profile.beta, "Upper edge of the alteration window")->capture_default_str();
  kg->add_option("--a", keygen.profile.a, "Lower bound of the transferred mass")->capture_default_str();
  kg->add_option("--b", keygen.profile.b, "Upper bound of the transferred mass (must be <= alpha)")->capture_default_str();
  kg->add_flag("--uniform", keygen.uniform, "Use uniform secret vectors instead of one boosted index");
  kg->add_flag("--force", keygen.force, "Overwrite an existing output file");

  PerturbLogArgs plog;
  auto* pl = app.add_subcommand("perturb-log", "Apply the watermark to a recorded response log");
  pl->add_option("--in", plog.in, "Input response log CSV")->required()->check(CLI::ExistingFile);
  pl->add_option("--secrets", plog.secrets, "Secrets JSON")->required()->check(CLI::ExistingFile);
  pl->add_option("--seed", plog.seed, "Seed of the perturbation stream")->capture_default_str();
  pl->add_option("--out", plog.out, "Output response log CSV")->required();
  pl->add_flag("--force", plog.force, "Overwrite an existing output file");

  VerifyArgs ver;
  auto* vf = app.add_subcommand("verify", "Decide whether a suspect model carries the watermark");
  vf->add_option("--suspect", ver.suspect, "Suspect model response log")->required()->check(CLI::ExistingFile);
  vf->add_option("--original", ver.original, "Original model response log")->required()->check(CLI::ExistingFile);
  vf->add_option("--altered", ver.altered, "Altered model response log")->required()->check(CLI::ExistingFile);
  vf->add_option("--tau", ver.options.tau, "Detection threshold on eta")->capture_default_str();
  vf->add_option("--bins", ver.options.bin_count, "Histogram bins on [0,1]")->capture_default_str();
  vf->add_option("--epsilon", ver.options.smoothing_epsilon, "Per-bin smoothing mass")->capture_default_str();
  vf->add_option("--report", ver.out, "Also write the report JSON here");

  SimulateArgs sim;
  auto* sm = app.add_subcommand("simulate", "Run an extraction/verification campaign");
  sm->add_option("--config", sim.config, "Campaign config JSON (defaults apply when omitted)")->check(CLI::ExistingFile);
  sm->add_option("--out", sim.out, "Output directory")->required();

  PruneArgs prn;
  auto* pr = app.add_subcommand("prune", "Global magnitude pruning of a model weights file");
  pr->add_option("--model", prn.model, "Input weights JSON")->required()->check(CLI::ExistingFile);
  pr->add_option("--kappa", prn.kappa, "Fraction of weights to zero, in [0,1)")->capture_default_str();
  pr->add_option("--out", prn.out, "Output weights JSON")->required();
  pr->add_flag("--force", prn.force, "Overwrite an existing output file");

  ServeArgs srv;
  auto* sv = app.add_subcommand("serve", "Run the watermarking prediction proxy");
  sv->add_option("--config", srv.config, "Proxy config JSON (or set DYNAMARKS_PROXY_CONFIG)")->check(CLI::ExistingFile);
  sv->add_option("--upstream", srv.upstream, "Upstream URL or inprocess:<weights.json>");
  sv->add_option("--secrets", srv.secrets, "Secrets JSON");
  sv->add_option("--listen", srv.listen, "host:port to listen on")->capture_default_str();
  sv->add_option("--log", srv.log, "Append perturbed responses to this CSV log");
  sv->add_option("--seed-mode", srv.seed_mode, "entropy or fixed:<seed>")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*kg) return run_keygen(keygen);
    if (*pl) return run_perturb_log(plog);
    if (*vf) return run_verify(ver);
    if (*sm) return run_simulate(sim);
    if (*pr) return run_prune(prn);
    if (*sv) return run_serve(srv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const io::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}
