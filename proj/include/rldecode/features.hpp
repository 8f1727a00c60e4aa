#pragma once

#include <cstddef>

#include "rldecode/fwd.hpp"
#include "rldecode/lm_core.hpp"
#include "rldecode/sampling.hpp"

namespace rldecode {

struct FeatureConfig {
  std::size_t k = 50;
  std::size_t hidden_dim = 32;
  std::size_t max_prefix_len = 128;

  /// hidden summary | top-k logits | prefix length | entropy
  std::size_t state_len() const { return hidden_dim + k + 2; }
  /// Throws ConfigError on k == 0 or max_prefix_len == 0.
  void validate() const;
};

using StateVector = VecXd;

/// Shannon entropy over ln(V); 0 ln 0 is taken as 0. Throws ConfigError when
/// V < 2.
double normalized_entropy(const ProbVector& probs);

StateVector build_state(const StepOutput& step, const ProbVector& probs, const FeatureConfig& cfg);

}  // namespace rldecode
