#pragma once

#include "rldecode/fwd.hpp"
#include "rldecode/rng.hpp"

namespace rldecode {

/// Nonnegative, sums to one, indexed by token id.
using ProbVector = VecXd;

enum class SamplerMode { policy, greedy, static_ };

/// Decoding knobs for a single step. Ranges follow the controller's action
/// space; greedy ignores both.
class SamplerSettings {
 public:
  static constexpr double kMinTemperature = 0.2;
  static constexpr double kMaxTemperature = 1.2;
  static constexpr double kMinTopP = 0.8;
  static constexpr double kMaxTopP = 1.0;

  /// Throws ParameterError when temperature or top_p is out of range.
  SamplerSettings(double temperature, double top_p, SamplerMode mode = SamplerMode::policy);

  static SamplerSettings greedy() { return {1.0, 1.0, SamplerMode::greedy}; }

  double temperature() const { return temperature_; }
  double top_p() const { return top_p_; }
  SamplerMode mode() const { return mode_; }

 private:
  double temperature_;
  double top_p_;
  SamplerMode mode_;
};

/// softmax(logits / T) with max subtraction. Throws ParameterError for T <= 0.
ProbVector apply_temperature(const VecXd& logits, double temperature);

/// Keeps the shortest prefix of tokens, by descending probability with ties to
/// the lower id, whose cumulative mass reaches p; renormalizes the survivors.
/// Throws ParameterError unless 0 < p <= 1.
ProbVector top_p_filter(const ProbVector& probs, double p);

/// Lowest index of the maximum.
TokenId argmax_token(const ProbVector& probs);

/// Inverse-CDF draw using exactly the given uniform in [0, 1).
TokenId sample_categorical(const ProbVector& probs, double u);

/// Greedy mode takes the argmax and leaves rng untouched; otherwise consumes
/// one uniform.
TokenId sample_token(const ProbVector& probs, const SamplerSettings& settings, Rng& rng);

/// Full step: temperature, nucleus filter, then draw.
TokenId decode_step(const VecXd& logits, const SamplerSettings& settings, Rng& rng);

}  // namespace rldecode
