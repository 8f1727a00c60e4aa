#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rldecode/fwd.hpp"

namespace rldecode {

/// Lowercases, splits on whitespace and strips punctuation from token edges.
/// Sentence-ending marks (. ! ?) found at a token's end are emitted as their
/// own token.
std::vector<std::string> tokenize(std::string_view text);

/// Joins tokens with single spaces, attaching sentence-ending marks to the
/// preceding word.
std::string detokenize(std::span<const std::string> tokens);

class Vocab {
 public:
  static constexpr std::string_view kEos = "<eos>";
  static constexpr std::string_view kUnk = "<unk>";

  /// Reserved tokens get ids 0 (EOS) and 1 (UNK); the rest follow in
  /// first-seen order.
  Vocab();
  explicit Vocab(std::span<const std::string> tokens);

  TokenId add(const std::string& token);
  TokenId lookup(std::string_view token) const;  // UNK when absent
  bool contains(std::string_view token) const;
  const std::string& token_of(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

  TokenId eos() const { return 0; }
  TokenId unk() const { return 1; }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<TokenId> encode(std::span<const std::string> tokens) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// One decoding step of a frozen model.
struct StepOutput {
  VecXd logits;
  std::optional<VecXd> hidden_summary;
  std::size_t prefix_len = 0;
};

/// Token-probability source. Implementations are frozen: next_logits is a
/// pure function of the prefix.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;
  virtual const Vocab& vocab() const = 0;
  virtual StepOutput next_logits(std::span<const TokenId> prefix) const = 0;
  /// Length of hidden_summary, 0 when the model provides none.
  virtual std::size_t hidden_dim() const = 0;
};

struct NGramOptions {
  int order = 3;
  double smoothing_k = 0.1;
  std::size_t hidden_dim = 32;
  std::uint64_t projection_seed = 0x5eed;
};

/// Word-level add-k smoothed n-gram model. Contexts shorter than order-1 are
/// left-padded with EOS, which doubles as the sequence-start marker.
class NGramLM final : public LanguageModel {
 public:
  NGramLM(Vocab vocab, NGramOptions options);

  const Vocab& vocab() const override { return vocab_; }
  std::size_t hidden_dim() const override { return options_.hidden_dim; }
  StepOutput next_logits(std::span<const TokenId> prefix) const override;

  /// Smoothed conditional distribution given the last order-1 tokens.
  VecXd conditional(std::span<const TokenId> prefix) const;

  int order() const { return options_.order; }
  double smoothing_k() const { return options_.smoothing_k; }
  /// Raw count of `next` after `context` (context length order-1).
  double count(std::span<const TokenId> context, TokenId next) const;

 private:
  friend NGramLM build_ngram_lm(const std::vector<std::vector<std::string>>&, const NGramOptions&);

  struct ContextCounts {
    std::unordered_map<TokenId, double> next;
    double total = 0.0;
  };
  struct ContextHash {
    std::size_t operator()(const std::vector<TokenId>& ctx) const noexcept;
  };

  std::vector<TokenId> context_of(std::span<const TokenId> prefix) const;

  Vocab vocab_;
  NGramOptions options_;
  std::unordered_map<std::vector<TokenId>, ContextCounts, ContextHash> counts_;
  MatXd projection_;  // hidden_dim x V
};

/// Counts every order-length window of each EOS-terminated sequence.
/// Throws ConfigError on an empty corpus or order < 1.
NGramLM build_ngram_lm(const std::vector<std::vector<std::string>>& corpus,
                       const NGramOptions& options = {});

/// Reads one document per line and tokenizes it.
std::vector<std::vector<std::string>> read_text_corpus(const std::string& path);

/// Numerically stable softmax.
VecXd softmax(const VecXd& logits);

}  // namespace rldecode
