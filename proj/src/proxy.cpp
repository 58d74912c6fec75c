#include "dynamarks/proxy.hpp"

#include <charconv>
#include <cmath>
#include <csignal>
#include <pthread.h>
#include <random>

#include "dynamarks/io.hpp"
#include "httplib.h"
#include "json.hpp"

namespace dynamarks::proxy {

using nlohmann::json;

namespace {

std::vector<double> parse_probs_reply(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error&) {
    throw UpstreamError("upstream reply is not JSON");
  }
  if (!j.is_object() || !j.contains("probs") || !j["probs"].is_array()) {
    throw UpstreamError("upstream reply has no \"probs\" array");
  }
  std::vector<double> out;
  for (const auto& v : j["probs"]) {
    if (!v.is_number()) throw UpstreamError("upstream reply has a non-numeric probability");
    out.push_back(v.get<double>());
  }
  return out;
}

HttpReply error_reply(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

}  // namespace

Upstream make_http_upstream(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw std::invalid_argument("upstream URL needs a scheme");
  const auto path_start = url.find('/', scheme_end + 3);
  const std::string origin = url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/predict" : url.substr(path_start);

  return [origin, path](std::span<const double> features) {
    httplib::Client client(origin);
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(10, 0);
    client.set_tcp_nodelay(true);
    const std::string body =
        json{{"features", std::vector<double>(features.begin(), features.end())}}.dump();
    auto res = client.Post(path, body, "application/json");
    if (!res) throw UpstreamError("upstream unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      throw UpstreamError("upstream returned HTTP " + std::to_string(res->status));
    }
    return parse_probs_reply(res->body);
  };
}

Upstream make_inprocess_upstream(const std::filesystem::path& model_file) {
  auto model = std::make_shared<const ToyClassifier>(io::load_weights(model_file));
  return [model](std::span<const double> features) {
    return model->predict(features).components();
  };
}

Upstream make_upstream(const std::string& descriptor) {
  constexpr std::string_view prefix = "inprocess:";
  if (descriptor.starts_with(prefix)) {
    return make_inprocess_upstream(descriptor.substr(prefix.size()));
  }
  return make_http_upstream(descriptor);
}

SeedMode parse_seed_mode(const std::string& text) {
  if (text == "entropy") return {};
  constexpr std::string_view prefix = "fixed:";
  if (text.starts_with(prefix)) {
    const std::string digits = text.substr(prefix.size());
    std::uint64_t seed = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
    if (ec == std::errc{} && ptr == digits.data() + digits.size() && !digits.empty()) {
      return SeedMode{seed};
    }
  }
  throw std::invalid_argument("seed_mode must be 'entropy' or 'fixed:<seed>'");
}

ProxyConfig load_proxy_config(const std::filesystem::path& path) {
  const std::string kind = "proxy-config";
  json j;
  try {
    j = json::parse(io::read_file(path, kind));
  } catch (const json::parse_error&) {
    throw io::SchemaError(kind, path.string(), "malformed JSON");
  }
  if (!j.is_object()) throw io::SchemaError(kind, "$", "expected an object");
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_relative() ? base / fp : fp;
  };
  auto str = [&](const char* key) -> std::optional<std::string> {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_string()) throw io::SchemaError(kind, std::string("$.") + key, "expected a string");
    return j[key].get<std::string>();
  };
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& k = it.key();
    if (k != "upstream" && k != "secrets_path" && k != "listen_address" && k != "log_path" &&
        k != "seed_mode") {
      throw io::SchemaError(kind, "$." + k, "unknown key");
    }
  }

  ProxyConfig cfg;
  auto upstream = str("upstream");
  auto secrets = str("secrets_path");
  if (!upstream) throw io::SchemaError(kind, "$.upstream", "missing field");
  if (!secrets) throw io::SchemaError(kind, "$.secrets_path", "missing field");
  cfg.upstream = *upstream;
  constexpr std::string_view inproc = "inprocess:";
  if (cfg.upstream.starts_with(inproc)) {
    cfg.upstream = std::string(inproc) + resolve(cfg.upstream.substr(inproc.size())).string();
  }
  cfg.secrets_path = resolve(*secrets);
  if (auto a = str("listen_address")) cfg.listen_address = *a;
  if (auto l = str("log_path")) cfg.log_path = resolve(*l);
  if (auto s = str("seed_mode")) {
    try {
      cfg.seed_mode = parse_seed_mode(*s);
    } catch (const std::invalid_argument& e) {
      throw io::SchemaError(kind, "$.seed_mode", e.what());
    }
  }
  return cfg;
}

// ---------------------------------------------------------------------------

PredictionService::PredictionService(SecretParameters secrets, Upstream upstream,
                                     SeedMode seed_mode,
                                     std::optional<std::filesystem::path> log_path)
    : perturber_(std::move(secrets)),
      upstream_(std::move(upstream)),
      started_(std::chrono::steady_clock::now()),
      master_(seed_mode.fixed_seed ? *seed_mode.fixed_seed
                                   : (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^
                                         std::random_device{}()) {
  if (log_path) {
    const bool fresh = !std::filesystem::exists(*log_path) || std::filesystem::file_size(*log_path) == 0;
    log_.emplace(*log_path, std::ios::app);
    if (!*log_) throw std::runtime_error("cannot open response log " + log_path->string());
    if (fresh) *log_ << io::response_log_header(perturber_.n_classes()) << '\n' << std::flush;
  }
}

HttpReply PredictionService::predict(std::string_view body) {
  {
    std::lock_guard lock(mu_);
    ++stats_.requests;
  }
  const std::size_t n = perturber_.n_classes();

  json req;
  try {
    req = json::parse(body.begin(), body.end());
  } catch (const json::parse_error&) {
    return error_reply(400, "request body is not valid JSON");
  }
  if (!req.is_object()) return error_reply(400, "request body must be a JSON object");
  const bool has_features = req.contains("features");
  const bool has_probs = req.contains("probs");
  if (has_features == has_probs) {
    return error_reply(400, "exactly one of \"features\" or \"probs\" is required");
  }
  const json& payload = has_features ? req["features"] : req["probs"];
  if (!payload.is_array()) return error_reply(400, "payload must be an array of numbers");
  std::vector<double> values;
  for (const auto& v : payload) {
    if (!v.is_number()) return error_reply(400, "payload must be an array of numbers");
    values.push_back(v.get<double>());
  }

  std::int64_t label = -1;
  if (req.contains("label")) {
    if (!req["label"].is_number_integer()) return error_reply(400, "\"label\" must be an integer");
    label = req["label"].get<std::int64_t>();
    if (label < -1 || label >= static_cast<std::int64_t>(n)) {
      return error_reply(400, "\"label\" out of range");
    }
  }
  std::optional<std::int64_t> query_id;
  if (req.contains("query_id")) {
    if (!req["query_id"].is_number_integer()) {
      return error_reply(400, "\"query_id\" must be an integer");
    }
    query_id = req["query_id"].get<std::int64_t>();
  }

  std::vector<double> raw;
  if (has_probs) {
    if (values.size() != n) {
      return error_reply(400, "\"probs\" has " + std::to_string(values.size()) +
                                  " components, expected " + std::to_string(n));
    }
    raw = std::move(values);
  } else {
    try {
      raw = upstream_(values);
    } catch (const UpstreamError& e) {
      return error_reply(502, e.what());
    } catch (const std::invalid_argument& e) {
      return error_reply(400, e.what());
    } catch (const std::exception& e) {
      return error_reply(502, std::string("upstream failure: ") + e.what());
    }
    if (raw.size() != n) {
      return error_reply(500, "upstream returned " + std::to_string(raw.size()) +
                                  " components but the watermark is configured for " +
                                  std::to_string(n) + " classes");
    }
  }

  std::optional<ProbabilityVector> p;
  try {
    p.emplace(std::move(raw), io::kIngestTolerance);
  } catch (const std::invalid_argument& e) {
    return error_reply(has_probs ? 400 : 502, e.what());
  }
  // Accepted at ingest tolerance; bring it to the internal one before perturbing.
  if (const double total = p->sum(); std::abs(total - 1.0) > kSimplexTolerance) {
    std::vector<double> scaled = p->components();
    for (double& v : scaled) v /= total;
    p.emplace(std::move(scaled));
  }

  Rng stream(0);
  std::int64_t qid = 0;
  {
    std::lock_guard lock(mu_);
    stream = master_.split();
    qid = query_id ? *query_id : static_cast<std::int64_t>(next_query_id_);
    ++next_query_id_;
  }
  const AlteredResponse altered = perturber_.alter(*p, stream);

  {
    std::lock_guard lock(mu_);
    stats_.perturbations_applied += altered.record.applied ? 1 : 0;
    stats_.component_ops += altered.record.component_ops;
    if (log_) {
      *log_ << io::format_response_row({qid, label, altered.probs.components()}) << '\n'
            << std::flush;
    }
  }

  const json reply{{"probs", altered.probs.components()},
                   {"argmax", argmax(altered.probs).value}};
  return {200, reply.dump()};
}

HttpReply PredictionService::health() const {
  const auto uptime = std::chrono::duration_cast<std::chrono::seconds>(
      std::chrono::steady_clock::now() - started_);
  std::lock_guard lock(mu_);
  const json j{{"uptime_s", uptime.count()},
               {"requests", stats_.requests},
               {"perturbations_applied", stats_.perturbations_applied}};
  return {200, j.dump()};
}

ServiceStats PredictionService::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

// ---------------------------------------------------------------------------

struct ProxyServer::Impl {
  std::shared_ptr<PredictionService> service;
  httplib::Server server;
  std::thread thread;
};

ProxyServer::ProxyServer(std::shared_ptr<PredictionService> service)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  auto svc = impl_->service;
  impl_->server.set_tcp_nodelay(true);
  impl_->server.Post("/predict", [svc](const httplib::Request& req, httplib::Response& res) {
    const HttpReply r = svc->predict(req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
  impl_->server.Get("/health", [svc](const httplib::Request&, httplib::Response& res) {
    const HttpReply r = svc->health();
    res.status = r.status;
    res.set_content(r.body, "application/json");
  });
}

ProxyServer::~ProxyServer() { stop(); }

int ProxyServer::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void ProxyServer::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void ProxyServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::pair<std::string, int> parse_listen_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == address.size()) {
    throw std::invalid_argument("listen address must be host:port");
  }
  const std::string port_text = address.substr(colon + 1);
  int port = 0;
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || port < 0 ||
      port > 65535) {
    throw std::invalid_argument("invalid port in listen address");
  }
  return {address.substr(0, colon), port};
}

void serve(const ProxyConfig& config) {
  auto secrets = io::load_secrets(config.secrets_path);
  auto service = std::make_shared<PredictionService>(
      std::move(secrets), make_upstream(config.upstream), config.seed_mode, config.log_path);
  const auto [host, port] = parse_listen_address(config.listen_address);

  // Signals are taken synchronously by a dedicated thread; every other thread
  // inherits the blocked mask.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  ProxyServer server(service);
  std::thread waiter([&server, set] {
    int sig = 0;
    sigwait(&set, &sig);
    server.stop();
  });
  try {
    server.listen(host, port);
  } catch (...) {
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    throw;
  }
  // listen() returned because stop() ran; the waiter has finished.
  waiter.join();
}

}  // namespace dynamarks::proxy
