#include "rldecode/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rldecode/errors.hpp"

namespace rldecode {

SamplerSettings::SamplerSettings(double temperature, double top_p, SamplerMode mode)
    : temperature_(temperature), top_p_(top_p), mode_(mode) {
  if (mode_ == SamplerMode::greedy) return;
  if (!(temperature >= kMinTemperature && temperature <= kMaxTemperature)) {
    throw ParameterError("temperature must lie in [0.2, 1.2]");
  }
  if (!(top_p >= kMinTopP && top_p <= kMaxTopP)) {
    throw ParameterError("top_p must lie in [0.8, 1.0]");
  }
}

ProbVector apply_temperature(const VecXd& logits, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  const VecXd scaled = logits / temperature;
  const double m = scaled.maxCoeff();
  VecXd e = (scaled.array() - m).exp().matrix();
  return e / e.sum();
}

ProbVector top_p_filter(const ProbVector& probs, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ParameterError("top_p must lie in (0, 1]");
  if (p == 1.0) return probs;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(probs.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return probs[a] > probs[b]; });

  ProbVector out = ProbVector::Zero(probs.size());
  double mass = 0.0;
  for (Eigen::Index id : order) {
    out[id] = probs[id];
    mass += probs[id];
    if (mass >= p) break;
  }
  return out / mass;
}

TokenId argmax_token(const ProbVector& probs) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

TokenId sample_categorical(const ProbVector& probs, double u) {
  double cum = 0.0;
  Eigen::Index last_nonzero = 0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_nonzero = i;
    cum += probs[i];
    if (u < cum) return static_cast<TokenId>(i);
  }
  // Rounding left the cumulative sum just below u.
  return static_cast<TokenId>(last_nonzero);
}

TokenId sample_token(const ProbVector& probs, const SamplerSettings& settings, Rng& rng) {
  if (settings.mode() == SamplerMode::greedy) return argmax_token(probs);
  return sample_categorical(probs, rng.uniform());
}

TokenId decode_step(const VecXd& logits, const SamplerSettings& settings, Rng& rng) {
  if (settings.mode() == SamplerMode::greedy) return argmax_token(logits);
  const ProbVector probs = top_p_filter(apply_temperature(logits, settings.temperature()),
                                        settings.top_p());
  return sample_token(probs, settings, rng);
}

}  // namespace rldecode
