#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "doctest.h"
#include "dynamarks/io.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / ("dynamarks_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(DYNAMARKS_CLI_PATH) + " " + args + " > " +
                          (work_dir() / "stdout.txt").string() + " 2> " +
                          (work_dir() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

// One small campaign shared by the verify cases.
const fs::path& campaign_logs() {
  static const fs::path logs = [] {
    std::ofstream(path("cfg.json")) << R"({"trials": 1, "write_logs": true})";
    REQUIRE(run("simulate --config " + path("cfg.json") + " --out " + path("sim")) == 0);
    return work_dir() / "sim" / "logs";
  }();
  return logs;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(run("") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("keygen --classes 3") == 2);
  CHECK(run("--help") == 0);
  CHECK(slurp(work_dir() / "stdout.txt").find("keygen") != std::string::npos);
}

TEST_CASE("keygen") {
  const std::string out = path("s.json");
  REQUIRE(run("keygen --classes 10 --seed 7 --out " + out) == 0);
  const auto s = dynamarks::io::load_secrets(out);
  CHECK(s.n_classes == 10);
  CHECK(s.per_class[3].alpha == 0.9);
  CHECK(s.per_class[3].b == 0.19);
  const std::string first = slurp(out);

  CHECK(run("keygen --classes 10 --seed 7 --out " + out) != 0);
  CHECK(run("keygen --classes 10 --seed 7 --out " + out + " --force") == 0);
  CHECK(slurp(out) == first);

  CHECK(run("keygen --classes 1 --seed 7 --out " + path("one.json")) == 2);
  CHECK_FALSE(fs::exists(path("one.json")));
  CHECK(run("keygen --classes 4 --seed 7 --b 0.95 --out " + path("wide.json")) == 2);
}

TEST_CASE("verify exit codes follow the verdict") {
  const fs::path logs = campaign_logs();
  const std::string sm = (logs / "trial0_cell0_suspect.csv").string();
  const std::string org = (logs / "trial0_cell0_original.csv").string();
  const std::string alt = (logs / "trial0_cell0_altered.csv").string();

  CHECK(run("verify --suspect " + sm + " --original " + org + " --altered " + alt) == 0);
  CHECK(slurp(work_dir() / "stdout.txt").find("\"status\": \"detected\"") != std::string::npos);

  CHECK(run("verify --suspect " + alt + " --original " + org + " --altered " + alt) == 0);
  CHECK(slurp(work_dir() / "stdout.txt").find("degenerate_detected") != std::string::npos);

  CHECK(run("verify --suspect " + org + " --original " + org + " --altered " + alt) == 3);
  CHECK(run("verify --suspect " + org + " --original " + org + " --altered " + org) == 4);

  const std::string benign_sm = (logs / "trial0_benign_softmax-linear_suspect.csv").string();
  const std::string benign_org = (logs / "trial0_benign_softmax-linear_original.csv").string();
  const std::string benign_alt = (logs / "trial0_benign_softmax-linear_altered.csv").string();
  CHECK(run("verify --suspect " + benign_sm + " --original " + benign_org + " --altered " +
            benign_alt) == 3);

  const std::string report = path("report.json");
  CHECK(run("verify --suspect " + sm + " --original " + org + " --altered " + alt +
            " --report " + report) == 0);
  CHECK(dynamarks::io::load_report(report).detected);
}

TEST_CASE("verify rejects mismatched or malformed logs") {
  std::ofstream(path("two.csv")) << "query_id,true_label,p_0,p_1\n0,0,0.5,0.5\n";
  std::ofstream(path("three.csv")) << "query_id,true_label,p_0,p_1,p_2\n0,0,0.5,0.25,0.25\n";
  std::ofstream(path("bad.csv")) << "query_id,true_label,p_0,p_1\n0,0,0.5,0.3\n";
  CHECK(run("verify --suspect " + path("two.csv") + " --original " + path("three.csv") +
            " --altered " + path("two.csv")) == 2);
  CHECK(run("verify --suspect " + path("bad.csv") + " --original " + path("two.csv") +
            " --altered " + path("two.csv")) == 2);
}

TEST_CASE("perturb-log is deterministic under a fixed seed") {
  const fs::path logs = campaign_logs();
  const std::string org = (logs / "trial0_cell0_original.csv").string();
  const std::string secrets = (logs / "trial0_secrets.json").string();
  REQUIRE(run("perturb-log --in " + org + " --secrets " + secrets + " --seed 3 --out " +
              path("p1.csv")) == 0);
  REQUIRE(run("perturb-log --in " + org + " --secrets " + secrets + " --seed 3 --out " +
              path("p2.csv")) == 0);
  CHECK(slurp(path("p1.csv")) == slurp(path("p2.csv")));
  CHECK(slurp(path("p1.csv")) != slurp(org));
  CHECK(run("perturb-log --in " + org + " --secrets " + secrets + " --seed 3 --out " +
            path("p1.csv")) != 0);
  // A perturbed copy of the original log is itself a valid altered log.
  CHECK(run("verify --suspect " + (logs / "trial0_cell0_suspect.csv").string() + " --original " +
            org + " --altered " + path("p1.csv")) == 0);
}

TEST_CASE("simulate") {
  const fs::path logs = campaign_logs();
  CHECK(fs::exists(logs.parent_path() / "campaign.csv"));
  CHECK(fs::exists(logs.parent_path() / "campaign.json"));
  std::ofstream(path("bad_cfg.json")) << R"({"gammas": [2.0]})";
  CHECK(run("simulate --config " + path("bad_cfg.json") + " --out " + path("sim_bad")) == 2);
  std::ofstream(path("typo_cfg.json")) << R"({"trails": 2})";
  CHECK(run("simulate --config " + path("typo_cfg.json") + " --out " + path("sim_bad")) == 2);
}

TEST_CASE("prune") {
  const fs::path logs = campaign_logs();
  const std::string model = (logs / "trial0_victim_softmax-linear.json").string();
  REQUIRE(run("prune --model " + model + " --kappa 0.5 --out " + path("pruned.json")) == 0);
  const auto m = dynamarks::io::load_weights(path("pruned.json"));
  std::size_t zeros = 0;
  for (double w : m.tensors()[0].data) zeros += (w == 0.0);
  CHECK(zeros == m.tensors()[0].data.size() / 2);
  CHECK(run("prune --model " + model + " --kappa 1.0 --out " + path("pruned2.json")) == 2);
}

TEST_CASE("serve reports configuration errors") {
  CHECK(run("serve") == 2);
  CHECK(run("serve --upstream inprocess:" + path("missing.json") + " --secrets " +
            path("s.json")) != 0);
}

TEST_CASE("cleanup") { fs::remove_all(work_dir()); }
