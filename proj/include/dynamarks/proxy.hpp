#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>

#include "dynamarks/core.hpp"
#include "dynamarks/perturb.hpp"

namespace dynamarks::proxy {

// Raised by an upstream that cannot produce a response (connection refused,
// bad status, unparsable body).
class UpstreamError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Features in, probabilities out. May throw UpstreamError.
using Upstream = std::function<std::vector<double>(std::span<const double>)>;

// "http://host:port/path": POSTs {"features": [...]} and expects {"probs": [...]}.
Upstream make_http_upstream(const std::string& url);
// Serves a simkit model loaded from a weights file.
Upstream make_inprocess_upstream(const std::filesystem::path& model_file);
// Dispatches on "inprocess:<file>" versus an http(s) URL.
Upstream make_upstream(const std::string& descriptor);

struct SeedMode {
  // Empty means per-process entropy.
  std::optional<std::uint64_t> fixed_seed;
};

// "fixed:<seed>" or "entropy".
SeedMode parse_seed_mode(const std::string& text);

struct ProxyConfig {
  std::string upstream;
  std::filesystem::path secrets_path;
  std::string listen_address = "127.0.0.1:8080";
  std::optional<std::filesystem::path> log_path;
  SeedMode seed_mode;
};

// Reads a JSON config: {"upstream", "secrets_path", "listen_address",
// "log_path", "seed_mode"}. Relative paths resolve against the file's folder.
ProxyConfig load_proxy_config(const std::filesystem::path& path);

struct HttpReply {
  int status = 200;
  std::string body;
};

struct ServiceStats {
  std::uint64_t requests = 0;
  std::uint64_t perturbations_applied = 0;
  // Component operations spent inside the perturbation step, summed over all
  // successful requests; grows as O(N) per request.
  std::uint64_t component_ops = 0;
};

// Transport-independent request handling for the watermarking proxy.
//
// Each request takes its own generator stream split from a master stream
// under a lock, so concurrent requests perturb independently and a sequential
// replay in fixed-seed mode reproduces the log byte for byte. Counters and
// the log appender share the same lock.
class PredictionService {
 public:
  PredictionService(SecretParameters secrets, Upstream upstream, SeedMode seed_mode,
                    std::optional<std::filesystem::path> log_path = std::nullopt);

  // POST /predict. Body: {"features": [...]} or {"probs": [...]}, with
  // optional "label" and "query_id" recorded in the response log.
  HttpReply predict(std::string_view body);
  // GET /health.
  HttpReply health() const;

  ServiceStats stats() const;
  std::size_t n_classes() const { return perturber_.n_classes(); }

 private:
  Perturber perturber_;
  Upstream upstream_;
  std::chrono::steady_clock::time_point started_;

  mutable std::mutex mu_;
  Rng master_;
  std::uint64_t next_query_id_ = 0;
  ServiceStats stats_;
  std::optional<std::ofstream> log_;
};

// HTTP front end around a PredictionService.
class ProxyServer {
 public:
  explicit ProxyServer(std::shared_ptr<PredictionService> service);
  ~ProxyServer();
  ProxyServer(const ProxyServer&) = delete;
  ProxyServer& operator=(const ProxyServer&) = delete;

  // Binds and serves on a background thread. Port 0 picks a free port.
  // Returns the bound port; throws std::runtime_error if binding fails.
  int start(const std::string& host, int port);
  // Blocks serving on the calling thread until stop() is called.
  void listen(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Splits "host:port"; throws std::invalid_argument on malformed input.
std::pair<std::string, int> parse_listen_address(const std::string& address);

// Runs the proxy described by `config` until SIGINT/SIGTERM.
void serve(const ProxyConfig& config);

}  // namespace dynamarks::proxy
