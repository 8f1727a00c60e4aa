#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rldecode {

enum class RewardVariant { proposed, rouge_only, core_shaping, no_coverage, soft_repetition, sigmoid_scaling };
enum class Normalization { linear, sigmoid };

/// Names exactly as accepted on the command line.
std::string_view variant_name(RewardVariant v);
/// Throws ConfigError for an unknown name.
RewardVariant parse_variant(std::string_view name);
const std::vector<RewardVariant>& all_variants();

struct RewardConfig {
  double w_rouge = 0.5;
  double w_len = 0.2;
  double w_cov = 0.1;
  double cov_cap = 0.1;
  double rep_threshold = 0.30;
  double rep_penalty = -0.10;
  double completeness_penalty = -0.05;
  std::size_t min_token_len_for_coverage = 4;  // tokens strictly longer count
  double raw_min = -0.15;
  double raw_max = 0.8;
  Normalization normalization = Normalization::linear;
  double sigmoid_k = 5.0;
  RewardVariant variant = RewardVariant::proposed;

  /// Default weights with the variant's own penalty, normalization and raw
  /// extrema (the sums of the active components' extremes).
  static RewardConfig for_variant(RewardVariant v);

  bool uses_length() const;
  bool uses_coverage() const;
  bool uses_repetition() const;
  bool uses_completeness() const;

  /// Throws ConfigError unless raw_min < raw_max and weights are finite.
  void validate() const;
};

struct RewardBreakdown {
  double rouge_f1 = 0.0;
  double length_term = 0.0;
  double coverage_term = 0.0;
  double repetition_term = 0.0;
  double completeness_term = 0.0;
  double raw = 0.0;
  double normalized = 0.0;
};

/// Token-level LCS F1; 0 when either side is empty or nothing matches.
double rouge_l_f1(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Ideal length is 10% of the source clamped to [10, 150].
std::size_t ideal_length(std::size_t source_len);
double length_term(std::size_t cand_len, std::size_t source_len);

double coverage_term(std::span<const std::string> candidate, std::span<const std::string> source,
                     const RewardConfig& cfg = {});

double repeated_fraction(std::span<const std::string> candidate);
double repetition_term(std::span<const std::string> candidate, const RewardConfig& cfg = {});

double completeness_term(std::string_view text, const RewardConfig& cfg = {});

double normalize(double raw, const RewardConfig& cfg);

RewardBreakdown composite_reward(std::string_view candidate_text, std::string_view reference_text,
                                 std::string_view source_text, const RewardConfig& cfg);

}  // namespace rldecode
