#include "rldecode/remote_lm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include <httplib.h>
#include <json.hpp>

#include "rldecode/errors.hpp"

namespace rldecode {

using nlohmann::json;

void RemoteConfig::validate() const {
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  if (timeout_ms <= 0) throw ConfigError("timeout_ms must be positive");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

std::string make_step_request(std::string_view prefix, int k) {
  return json{{"prefix", std::string(prefix)}, {"k", k}}.dump();
}

RemoteStep parse_step_response(std::string_view body, int top_k) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProtocolError(std::string("response is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ProtocolError("response is not a JSON object");
  if (!doc.contains("top_logprobs")) throw ProtocolError("response missing \"top_logprobs\"");
  const json& entries = doc["top_logprobs"];
  if (!entries.is_array()) throw ProtocolError("\"top_logprobs\" is not an array");
  if (entries.size() > static_cast<std::size_t>(top_k)) {
    throw ProtocolError("response has more than k entries");
  }

  RemoteStep step;
  for (const json& e : entries) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() || !e[1].is_number()) {
      throw ProtocolError("top_logprobs entry must be [token, logprob]");
    }
    const double lp = e[1].get<double>();
    if (!std::isfinite(lp)) throw ProtocolError("non-finite logprob");
    if (!step.top_entries.empty() && lp > step.top_entries.back().second) {
      throw ProtocolError("top_logprobs not sorted descending");
    }
    step.top_entries.emplace_back(e[0].get<std::string>(), lp);
    if (step.top_entries.back().first == Vocab::kEos) step.is_eos_available = true;
  }

  if (doc.contains("hidden") && !doc["hidden"].is_null()) {
    const json& hidden = doc["hidden"];
    if (!hidden.is_array()) throw ProtocolError("\"hidden\" must be an array or null");
    VecXd h(static_cast<Eigen::Index>(hidden.size()));
    for (std::size_t i = 0; i < hidden.size(); ++i) {
      if (!hidden[i].is_number()) throw ProtocolError("\"hidden\" entries must be numbers");
      h[static_cast<Eigen::Index>(i)] = hidden[i].get<double>();
      if (!std::isfinite(h[static_cast<Eigen::Index>(i)])) throw ProtocolError("non-finite hidden value");
    }
    step.hidden_summary = std::move(h);
  }
  return step;
}

namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', host_start);
  Endpoint ep;
  ep.scheme_host_port = url.substr(0, slash);
  std::string base = slash == std::string::npos ? "" : url.substr(slash);
  while (!base.empty() && base.back() == '/') base.pop_back();
  ep.path = base + "/step";
  return ep;
}

}  // namespace

RemoteStep fetch_step(const RemoteConfig& cfg, std::string_view prefix_text) {
  cfg.validate();
  const Endpoint ep = split_endpoint(cfg.endpoint_url);
  httplib::Client client(ep.scheme_host_port);
  const auto timeout = std::chrono::milliseconds(cfg.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);

  const std::string body = make_step_request(prefix_text, cfg.top_k);
  std::string last_failure;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(100 << (attempt - 1)));
    auto res = client.Post(ep.path, body, "application/json");
    if (!res) {
      last_failure = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "server returned HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw ProtocolError("unexpected HTTP status " + std::to_string(res->status));
    return parse_step_response(res->body, cfg.top_k);
  }
  throw ConnectivityError(cfg.endpoint_url + ": " + last_failure + " after " +
                          std::to_string(cfg.max_retries + 1) + " attempts");
}

StepOutput embed_remote_step(const RemoteStep& step, const Vocab& vocab, std::size_t prefix_len) {
  const auto v = static_cast<Eigen::Index>(vocab.size());
  StepOutput out;
  out.prefix_len = prefix_len;
  out.hidden_summary = step.hidden_summary;
  if (step.top_entries.empty()) {
    out.logits = VecXd::Zero(v);
    return out;
  }
  const double floor_logit = step.top_entries.back().second - 10.0;
  out.logits = VecXd::Constant(v, floor_logit);
  std::vector<bool> seen(static_cast<std::size_t>(v), false);
  for (const auto& [token, lp] : step.top_entries) {
    const TokenId id = vocab.lookup(token);
    auto& slot = out.logits[id];
    if (!seen[static_cast<std::size_t>(id)]) {
      slot = lp;
      seen[static_cast<std::size_t>(id)] = true;
    } else {
      const double hi = std::max(slot, lp);
      slot = hi + std::log(std::exp(slot - hi) + std::exp(lp - hi));
    }
  }
  return out;
}

StepOutput remote_next(const RemoteConfig& cfg, const Vocab& vocab, std::span<const TokenId> prefix) {
  const std::string text = detokenize(vocab.decode(prefix));
  return embed_remote_step(fetch_step(cfg, text), vocab, prefix.size());
}

RemoteLM::RemoteLM(RemoteConfig cfg, Vocab vocab, std::size_t hidden_dim)
    : cfg_(std::move(cfg)), vocab_(std::move(vocab)), hidden_dim_(hidden_dim) {
  cfg_.validate();
}

StepOutput RemoteLM::next_logits(std::span<const TokenId> prefix) const {
  StepOutput out = remote_next(cfg_, vocab_, prefix);
  if (out.hidden_summary && static_cast<std::size_t>(out.hidden_summary->size()) != hidden_dim_) {
    throw ProtocolError("hidden vector length " + std::to_string(out.hidden_summary->size()) +
                        " differs from the declared " + std::to_string(hidden_dim_));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mock server

MockStepServer::MockStepServer(std::shared_ptr<const LanguageModel> lm)
    : lm_(std::move(lm)), server_(std::make_unique<httplib::Server>()) {
  install_routes();
}

MockStepServer::~MockStepServer() { stop(); }

std::string MockStepServer::respond(std::string_view prefix_text, int k) const {
  const Vocab& vocab = lm_->vocab();
  const auto ids = vocab.encode(tokenize(prefix_text));
  const StepOutput step = lm_->next_logits(ids);
  const double m = step.logits.maxCoeff();
  const double log_z = m + std::log((step.logits.array() - m).exp().sum());

  std::vector<Eigen::Index> order(static_cast<std::size_t>(step.logits.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto keep = std::min<std::size_t>(order.size(), static_cast<std::size_t>(std::max(k, 0)));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                    [&](Eigen::Index a, Eigen::Index b) {
                      return step.logits[a] > step.logits[b] || (step.logits[a] == step.logits[b] && a < b);
                    });

  json entries = json::array();
  for (std::size_t i = 0; i < keep; ++i) {
    const Eigen::Index id = order[i];
    entries.push_back({vocab.token_of(static_cast<TokenId>(id)), step.logits[id] - log_z});
  }
  json hidden = nullptr;
  if (step.hidden_summary) {
    hidden = json::array();
    for (Eigen::Index i = 0; i < step.hidden_summary->size(); ++i) hidden.push_back((*step.hidden_summary)[i]);
  }

  switch (behavior_.load()) {
    case Behavior::malformed_json:
      return "{\"top_logprobs\": [[\"a\", -0.1], ";
    case Behavior::missing_field:
      return json{{"hidden", hidden}}.dump();
    case Behavior::unsorted:
      if (entries.size() >= 2) std::swap(entries[0], entries[entries.size() - 1]);
      break;
    case Behavior::normal:
      break;
  }
  return json{{"top_logprobs", entries}, {"hidden", hidden}}.dump();
}

void MockStepServer::install_routes() {
  server_->Post("/step", [this](const httplib::Request& req, httplib::Response& res) {
    ++served_;
    if (fail_remaining_.load() > 0) {
      --fail_remaining_;
      res.status = 503;
      res.set_content("{\"error\": \"unavailable\"}", "application/json");
      return;
    }
    json request;
    try {
      request = json::parse(req.body);
    } catch (const json::parse_error&) {
      res.status = 400;
      res.set_content("{\"error\": \"bad request\"}", "application/json");
      return;
    }
    if (!request.contains("prefix") || !request["prefix"].is_string() || !request.contains("k") ||
        !request["k"].is_number_integer()) {
      res.status = 400;
      res.set_content("{\"error\": \"expected prefix and k\"}", "application/json");
      return;
    }
    res.set_content(respond(request["prefix"].get<std::string>(), request["k"].get<int>()),
                    "application/json");
  });
}

int MockStepServer::start(const std::string& host, int port) {
  host_ = host;
  if (port == 0) {
    port_ = server_->bind_to_any_port(host);
  } else {
    if (!server_->bind_to_port(host, port)) port_ = -1;
    else port_ = port;
  }
  if (port_ < 0) throw ConnectivityError("mock server could not bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void MockStepServer::serve_blocking(const std::string& host, int port) {
  host_ = host;
  port_ = port;
  if (!server_->listen(host, port)) {
    throw ConnectivityError("mock server could not listen on " + host + ":" + std::to_string(port));
  }
}

void MockStepServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace rldecode
