#include "rldecode/features.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rldecode/errors.hpp"

namespace rldecode {

void FeatureConfig::validate() const {
  if (k < 1) throw ConfigError("feature k must be >= 1");
  if (max_prefix_len < 1) throw ConfigError("max_prefix_len must be >= 1");
}

double normalized_entropy(const ProbVector& probs) {
  if (probs.size() < 2) throw ConfigError("entropy needs a vocabulary of at least 2 tokens");
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double q = probs[i];
    if (q > 0.0) h -= q * std::log(q);
  }
  const double ratio = h / std::log(static_cast<double>(probs.size()));
  return std::clamp(ratio, 0.0, 1.0);
}

StateVector build_state(const StepOutput& step, const ProbVector& probs, const FeatureConfig& cfg) {
  StateVector state = StateVector::Zero(static_cast<Eigen::Index>(cfg.state_len()));
  const auto hidden = static_cast<Eigen::Index>(cfg.hidden_dim);
  if (step.hidden_summary && hidden > 0) {
    if (step.hidden_summary->size() != hidden) {
      throw ConfigError("hidden summary length does not match feature config");
    }
    state.head(hidden) = *step.hidden_summary;
  }

  const auto v = static_cast<std::size_t>(step.logits.size());
  const std::size_t kept = std::min(cfg.k, v);
  std::vector<double> sorted(step.logits.data(), step.logits.data() + v);
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(kept), sorted.end(),
                    std::greater<>());
  const double floor_logit = step.logits.minCoeff();
  for (std::size_t i = 0; i < cfg.k; ++i) {
    state[hidden + static_cast<Eigen::Index>(i)] = i < kept ? sorted[i] : floor_logit;
  }

  const double prefix = static_cast<double>(std::min(step.prefix_len, cfg.max_prefix_len));
  state[hidden + static_cast<Eigen::Index>(cfg.k)] = prefix / static_cast<double>(cfg.max_prefix_len);
  state[hidden + static_cast<Eigen::Index>(cfg.k) + 1] = normalized_entropy(probs);
  return state;
}

}  // namespace rldecode
