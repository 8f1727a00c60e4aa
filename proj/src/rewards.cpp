#include "rldecode/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <unordered_set>

#include "rldecode/errors.hpp"
#include "rldecode/lm_core.hpp"

namespace rldecode {

namespace {

constexpr std::pair<RewardVariant, std::string_view> kVariantNames[] = {
    {RewardVariant::proposed, "proposed"},
    {RewardVariant::rouge_only, "rouge_only"},
    {RewardVariant::core_shaping, "core_shaping"},
    {RewardVariant::no_coverage, "no_coverage"},
    {RewardVariant::soft_repetition, "soft_repetition"},
    {RewardVariant::sigmoid_scaling, "sigmoid_scaling"},
};

}  // namespace

std::string_view variant_name(RewardVariant v) {
  for (const auto& [variant, name] : kVariantNames) {
    if (variant == v) return name;
  }
  return "unknown";
}

RewardVariant parse_variant(std::string_view name) {
  for (const auto& [variant, n] : kVariantNames) {
    if (n == name) return variant;
  }
  throw ConfigError("unknown reward variant: " + std::string(name));
}

const std::vector<RewardVariant>& all_variants() {
  static const std::vector<RewardVariant> variants = [] {
    std::vector<RewardVariant> v;
    for (const auto& entry : kVariantNames) v.push_back(entry.first);
    return v;
  }();
  return variants;
}

bool RewardConfig::uses_length() const { return variant != RewardVariant::rouge_only; }

bool RewardConfig::uses_coverage() const {
  return variant == RewardVariant::proposed || variant == RewardVariant::soft_repetition ||
         variant == RewardVariant::sigmoid_scaling;
}

bool RewardConfig::uses_repetition() const { return variant != RewardVariant::rouge_only; }

bool RewardConfig::uses_completeness() const {
  return variant != RewardVariant::rouge_only && variant != RewardVariant::core_shaping;
}

RewardConfig RewardConfig::for_variant(RewardVariant v) {
  RewardConfig cfg;
  cfg.variant = v;
  if (v == RewardVariant::soft_repetition) cfg.rep_penalty = -0.05;
  if (v == RewardVariant::sigmoid_scaling) cfg.normalization = Normalization::sigmoid;

  // Extrema: every term is nonnegative-bounded or a one-sided penalty.
  cfg.raw_max = cfg.w_rouge;
  cfg.raw_min = 0.0;
  if (cfg.uses_length()) cfg.raw_max += cfg.w_len;
  if (cfg.uses_coverage()) cfg.raw_max += cfg.cov_cap;
  if (cfg.uses_repetition()) cfg.raw_min += cfg.rep_penalty;
  if (cfg.uses_completeness()) cfg.raw_min += cfg.completeness_penalty;
  return cfg;
}

void RewardConfig::validate() const {
  if (!(raw_min < raw_max)) throw ConfigError("raw_min must be below raw_max");
  for (double w : {w_rouge, w_len, w_cov, cov_cap, rep_penalty, completeness_penalty, sigmoid_k}) {
    if (!std::isfinite(w)) throw ConfigError("reward weights must be finite");
  }
}

double rouge_l_f1(std::span<const std::string> candidate, std::span<const std::string> reference) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const std::size_t m = reference.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (const auto& c : candidate) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = c == reference[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  const auto lcs = static_cast<double>(prev[m]);
  if (lcs == 0.0) return 0.0;
  const double p = lcs / static_cast<double>(candidate.size());
  const double r = lcs / static_cast<double>(reference.size());
  return 2.0 * p * r / (p + r);
}

std::size_t ideal_length(std::size_t source_len) {
  const auto rounded = static_cast<std::size_t>(std::llround(0.10 * static_cast<double>(source_len)));
  return std::clamp<std::size_t>(rounded, 10, 150);
}

double length_term(std::size_t cand_len, std::size_t source_len) {
  const auto ideal = static_cast<double>(ideal_length(source_len));
  const double dev = std::abs(static_cast<double>(cand_len) - ideal);
  return std::max(0.0, 1.0 - dev / ideal);
}

double coverage_term(std::span<const std::string> candidate, std::span<const std::string> source,
                     const RewardConfig& cfg) {
  std::set<std::string_view> important;
  for (const auto& t : source) {
    if (t.size() > cfg.min_token_len_for_coverage) important.insert(t);
  }
  if (important.empty() || candidate.empty()) return 0.0;
  std::set<std::string_view> hit;
  for (const auto& t : candidate) {
    if (important.count(t) != 0) hit.insert(t);
  }
  const double fraction = static_cast<double>(hit.size()) / static_cast<double>(important.size());
  return std::min(cfg.w_cov * fraction, cfg.cov_cap);
}

double repeated_fraction(std::span<const std::string> candidate) {
  if (candidate.empty()) return 0.0;
  const std::unordered_set<std::string_view> distinct(candidate.begin(), candidate.end());
  return static_cast<double>(candidate.size() - distinct.size()) / static_cast<double>(candidate.size());
}

double repetition_term(std::span<const std::string> candidate, const RewardConfig& cfg) {
  return repeated_fraction(candidate) > cfg.rep_threshold ? cfg.rep_penalty : 0.0;
}

double completeness_term(std::string_view text, const RewardConfig& cfg) {
  const auto end = text.find_last_not_of(" \t\r\n\f\v");
  if (end == std::string_view::npos) return cfg.completeness_penalty;
  const char last = text[end];
  return last == '.' || last == '!' || last == '?' ? 0.0 : cfg.completeness_penalty;
}

double normalize(double raw, const RewardConfig& cfg) {
  if (cfg.normalization == Normalization::linear) {
    return std::clamp((raw - cfg.raw_min) / (cfg.raw_max - cfg.raw_min), 0.0, 1.0);
  }
  const double mid = 0.5 * (cfg.raw_min + cfg.raw_max);
  return 1.0 / (1.0 + std::exp(-cfg.sigmoid_k * (raw - mid)));
}

RewardBreakdown composite_reward(std::string_view candidate_text, std::string_view reference_text,
                                 std::string_view source_text, const RewardConfig& cfg) {
  const auto cand = tokenize(candidate_text);
  const auto ref = tokenize(reference_text);
  const auto src = tokenize(source_text);

  RewardBreakdown b;
  b.rouge_f1 = rouge_l_f1(cand, ref);
  b.raw = cfg.w_rouge * b.rouge_f1;
  if (cfg.uses_length()) {
    b.length_term = length_term(cand.size(), std::max<std::size_t>(src.size(), 1));
    b.raw += cfg.w_len * b.length_term;
  }
  if (cfg.uses_coverage()) {
    b.coverage_term = coverage_term(cand, src, cfg);
    b.raw += b.coverage_term;
  }
  if (cfg.uses_repetition()) {
    b.repetition_term = repetition_term(cand, cfg);
    b.raw += b.repetition_term;
  }
  if (cfg.uses_completeness()) {
    b.completeness_term = completeness_term(candidate_text, cfg);
    b.raw += b.completeness_term;
  }
  b.normalized = normalize(b.raw, cfg);
  return b;
}

}  // namespace rldecode
