#include "rldecode/lm_core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>

#include "rldecode/errors.hpp"
#include "rldecode/rng.hpp"

namespace rldecode {

namespace {

bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
bool is_sentence_end(char c) { return c == '.' || c == '!' || c == '?'; }

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j == i) break;
    std::string_view chunk = text.substr(i, j - i);
    i = j;

    std::size_t b = 0;
    std::size_t e = chunk.size();
    while (b < e && is_punct(chunk[b])) ++b;
    while (e > b && is_punct(chunk[e - 1])) --e;

    // Last sentence-ending mark in the trailing run (or in an all-punct chunk).
    char mark = 0;
    for (std::size_t k = e; k < chunk.size(); ++k) {
      if (is_sentence_end(chunk[k])) mark = chunk[k];
    }
    if (b == e) {
      for (char c : chunk) {
        if (is_sentence_end(c)) mark = c;
      }
    }

    if (e > b) {
      std::string word(chunk.substr(b, e - b));
      for (char& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      out.push_back(std::move(word));
    }
    if (mark != 0) out.emplace_back(1, mark);
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (const auto& tok : tokens) {
    const bool attach = tok.size() == 1 && is_sentence_end(tok[0]);
    if (!out.empty() && !attach) out.push_back(' ');
    out += tok;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  add(std::string(kEos));
  add(std::string(kUnk));
}

Vocab::Vocab(std::span<const std::string> tokens) : Vocab() {
  for (const auto& t : tokens) add(t);
}

TokenId Vocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

TokenId Vocab::lookup(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk() : it->second;
}

bool Vocab::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

std::vector<TokenId> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<TokenId> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(lookup(t));
  return ids;
}

std::vector<std::string> Vocab::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId id : ids) out.push_back(token_of(id));
  return out;
}

// ---------------------------------------------------------------------------
// NGramLM

std::size_t NGramLM::ContextHash::operator()(const std::vector<TokenId>& ctx) const noexcept {
  std::size_t seed = ctx.size();
  for (TokenId t : ctx) {
    seed ^= std::hash<TokenId>{}(t) + 0x9e3779b9 + (seed << 6) + (seed >> 2);
  }
  return seed;
}

NGramLM::NGramLM(Vocab vocab, NGramOptions options)
    : vocab_(std::move(vocab)), options_(options) {
  if (options_.order < 1) throw ConfigError("n-gram order must be >= 1");
  if (!(options_.smoothing_k > 0.0)) throw ConfigError("smoothing_k must be positive");
  const auto v = static_cast<Eigen::Index>(vocab_.size());
  const auto h = static_cast<Eigen::Index>(options_.hidden_dim);
  projection_.resize(h, v);
  Rng rng(options_.projection_seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(h, 1)));
  for (Eigen::Index c = 0; c < v; ++c) {
    for (Eigen::Index r = 0; r < h; ++r) projection_(r, c) = scale * rng.normal();
  }
}

std::vector<TokenId> NGramLM::context_of(std::span<const TokenId> prefix) const {
  const auto n = static_cast<std::size_t>(options_.order - 1);
  std::vector<TokenId> ctx(n, vocab_.eos());
  const std::size_t take = std::min(n, prefix.size());
  std::copy(prefix.end() - static_cast<std::ptrdiff_t>(take), prefix.end(),
            ctx.end() - static_cast<std::ptrdiff_t>(take));
  return ctx;
}

VecXd NGramLM::conditional(std::span<const TokenId> prefix) const {
  const auto v = static_cast<Eigen::Index>(vocab_.size());
  const double k = options_.smoothing_k;
  auto it = counts_.find(context_of(prefix));
  if (it == counts_.end()) return VecXd::Constant(v, 1.0 / static_cast<double>(v));

  const double denom = it->second.total + k * static_cast<double>(v);
  VecXd probs = VecXd::Constant(v, k / denom);
  for (const auto& [id, c] : it->second.next) probs[id] = (c + k) / denom;
  return probs;
}

double NGramLM::count(std::span<const TokenId> context, TokenId next) const {
  auto it = counts_.find(std::vector<TokenId>(context.begin(), context.end()));
  if (it == counts_.end()) return 0.0;
  auto jt = it->second.next.find(next);
  return jt == it->second.next.end() ? 0.0 : jt->second;
}

StepOutput NGramLM::next_logits(std::span<const TokenId> prefix) const {
  StepOutput out;
  const VecXd probs = conditional(prefix);
  out.logits = probs.array().log().matrix();
  if (options_.hidden_dim > 0) out.hidden_summary = projection_ * probs;
  out.prefix_len = prefix.size();
  return out;
}

NGramLM build_ngram_lm(const std::vector<std::vector<std::string>>& corpus,
                       const NGramOptions& options) {
  if (corpus.empty()) throw ConfigError("cannot build an n-gram model from an empty corpus");
  if (options.order < 1) throw ConfigError("n-gram order must be >= 1");

  Vocab vocab;
  for (const auto& doc : corpus) {
    for (const auto& t : doc) vocab.add(t);
  }
  NGramLM lm(std::move(vocab), options);

  const auto n = static_cast<std::size_t>(options.order - 1);
  for (const auto& doc : corpus) {
    std::vector<TokenId> seq(n, lm.vocab_.eos());
    for (const auto& t : doc) seq.push_back(lm.vocab_.lookup(t));
    seq.push_back(lm.vocab_.eos());
    for (std::size_t i = n; i < seq.size(); ++i) {
      std::vector<TokenId> ctx(seq.begin() + static_cast<std::ptrdiff_t>(i - n),
                               seq.begin() + static_cast<std::ptrdiff_t>(i));
      auto& entry = lm.counts_[ctx];
      entry.next[seq[i]] += 1.0;
      entry.total += 1.0;
    }
  }
  return lm;
}

std::vector<std::vector<std::string>> read_text_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open corpus file: " + path);
  std::vector<std::vector<std::string>> docs;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = tokenize(line);
    if (!toks.empty()) docs.push_back(std::move(toks));
  }
  return docs;
}

VecXd softmax(const VecXd& logits) {
  const double m = logits.maxCoeff();
  VecXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

}  // namespace rldecode
