#pragma once

#include <atomic>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "rldecode/fwd.hpp"
#include "rldecode/lm_core.hpp"

namespace httplib {
class Server;
}

namespace rldecode {

struct RemoteConfig {
  std::string endpoint_url;  // e.g. http://127.0.0.1:8080
  int top_k = 50;
  int timeout_ms = 5000;
  int max_retries = 2;

  /// Throws ConfigError on top_k < 1, timeout_ms <= 0 or max_retries < 0.
  void validate() const;
};

struct RemoteStep {
  std::vector<std::pair<std::string, double>> top_entries;  // descending logprob
  std::optional<VecXd> hidden_summary;
  bool is_eos_available = false;
};

/// Request body for POST {endpoint}/step.
std::string make_step_request(std::string_view prefix, int k);

/// Validates and parses a response body. Throws ProtocolError on any schema
/// violation: missing "top_logprobs", non-finite or unsorted entries, more
/// than top_k entries, or a malformed "hidden".
RemoteStep parse_step_response(std::string_view body, int top_k);

/// POSTs the prefix and parses the reply. Transport failures and 5xx replies
/// are retried max_retries times with 100 ms * 2^attempt backoff, then raise
/// ConnectivityError; bad bodies and other statuses raise ProtocolError.
RemoteStep fetch_step(const RemoteConfig& cfg, std::string_view prefix_text);

/// Embeds the top-k entries into a dense logit vector over `vocab`. Tokens
/// missing from the reply get min_entry - 10; entries outside the vocabulary
/// are folded into UNK by log-sum-exp.
StepOutput embed_remote_step(const RemoteStep& step, const Vocab& vocab, std::size_t prefix_len);

StepOutput remote_next(const RemoteConfig& cfg, const Vocab& vocab, std::span<const TokenId> prefix);

/// LanguageModel backed by a remote logprob endpoint over a fixed session
/// vocabulary.
class RemoteLM final : public LanguageModel {
 public:
  RemoteLM(RemoteConfig cfg, Vocab vocab, std::size_t hidden_dim);

  const Vocab& vocab() const override { return vocab_; }
  std::size_t hidden_dim() const override { return hidden_dim_; }
  StepOutput next_logits(std::span<const TokenId> prefix) const override;

 private:
  RemoteConfig cfg_;
  Vocab vocab_;
  std::size_t hidden_dim_;
};

/// Serves the step protocol from a local LanguageModel. Used by the
/// `serve-mock` command and the integration tests.
class MockStepServer {
 public:
  enum class Behavior { normal, malformed_json, missing_field, unsorted };

  explicit MockStepServer(std::shared_ptr<const LanguageModel> lm);
  ~MockStepServer();
  MockStepServer(const MockStepServer&) = delete;
  MockStepServer& operator=(const MockStepServer&) = delete;

  void set_behavior(Behavior b) { behavior_ = b; }
  /// The next n requests get HTTP 503.
  void fail_next(int n) { fail_remaining_ = n; }

  /// Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Binds and serves on the calling thread until stop().
  void serve_blocking(const std::string& host, int port);
  void stop();

  std::string url() const { return "http://" + host_ + ":" + std::to_string(port_); }
  std::size_t requests_served() const { return served_; }

  /// Reply body the server would send for a prefix.
  std::string respond(std::string_view prefix_text, int k) const;

 private:
  void install_routes();

  std::shared_ptr<const LanguageModel> lm_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::string host_ = "127.0.0.1";
  int port_ = 0;
  std::atomic<Behavior> behavior_{Behavior::normal};
  std::atomic<int> fail_remaining_{0};
  std::atomic<std::size_t> served_{0};
};

}  // namespace rldecode
