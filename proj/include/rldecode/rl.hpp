#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rldecode/features.hpp"
#include "rldecode/fwd.hpp"
#include "rldecode/lm_core.hpp"
#include "rldecode/policy.hpp"
#include "rldecode/rng.hpp"

namespace rldecode {

struct PPOConfig {
  double clip_eps = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  int epochs_per_update = 4;
  int episodes_per_update = 8;
  int minibatch_size = 64;
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip_norm = 0.5;
  std::size_t max_episode_len = 128;
  /// Decision cadence in tokens; between decisions the last action is reused
  /// and no transition is recorded.
  std::size_t act_every = 1;

  /// Throws ConfigError when a field is outside its domain.
  void validate() const;
};

struct Transition {
  StateVector state;
  ActionParams action;
  double value = 0.0;
  double reward = 0.0;
};

enum class TerminalReason { eos, length_limit };

std::string to_string(TerminalReason reason);

struct Trajectory {
  std::vector<Transition> transitions;
  TerminalReason terminal_reason = TerminalReason::length_limit;
  double composite_reward = 0.0;
  std::vector<std::string> tokens;  // generated, EOS excluded
  std::string text;
  double mean_temperature = 0.0;
  double mean_top_p = 0.0;
};

/// What a reward function sees once an episode ends.
struct EpisodeOutcome {
  const std::vector<std::string>& tokens;
  const std::string& text;
  double mean_temperature;
  double mean_top_p;
};

using RewardFn = std::function<double(const EpisodeOutcome&)>;

struct EpisodeOptions {
  std::size_t max_len = 128;
  std::size_t act_every = 1;
  FeatureConfig features;
  /// Use the squashed mean instead of sampling the Gaussian.
  bool deterministic = false;
};

/// Generates one episode: per step the frozen model's logits are featurized,
/// the policy picks (T, p), and a token is drawn through temperature and
/// nucleus filtering. The composite reward lands on the final transition.
Trajectory run_episode(const LanguageModel& lm, const Policy& policy, const RewardFn& reward_fn,
                       std::span<const TokenId> prompt, Rng& rng, const EpisodeOptions& options);

struct AdvantageEstimate {
  VecXd advantages;
  VecXd returns;
};

/// GAE with a zero bootstrap after the last step. Throws InputError on
/// mismatched or empty inputs.
AdvantageEstimate compute_gae(std::span<const double> rewards, std::span<const double> values,
                              double gamma, double lambda);

/// Flattened training samples, one column per transition.
struct PPOBatch {
  MatXd states;        // state_len x B
  MatXd raw_actions;   // 2 x B
  VecXd old_log_probs;
  VecXd advantages;
  VecXd returns;

  Eigen::Index size() const { return states.cols(); }
  PPOBatch select(std::span<const Eigen::Index> columns) const;
};

struct UpdateStats {
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double grad_norm = 0.0;
};

struct LossResult {
  double total = 0.0;
  UpdateStats stats;
  PolicyParams<double> grads;
};

/// Minimized objective: -L_clip + c_v * mean (V - R)^2 - c_ent * H, with
/// analytic gradients. stats.grad_norm is the unclipped gradient norm.
LossResult ppo_losses(const PPOBatch& batch, const Policy& policy, const PPOConfig& cfg);

/// Loss value only; used as the finite-difference oracle's objective.
double ppo_total_loss(const PPOBatch& batch, const Policy& policy, const PPOConfig& cfg);

class Adam {
 public:
  Adam() = default;
  Adam(const PolicyDims& dims, double lr, double beta1, double beta2, double eps);

  void step(PolicyParams<double>& params, const PolicyParams<double>& grads);
  std::int64_t time_step() const { return t_; }

 private:
  PolicyParams<double> m_;
  PolicyParams<double> v_;
  double lr_ = 3e-4;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::int64_t t_ = 0;
};

/// Policy, optimizer and the shuffling stream; the single writer during
/// training.
struct TrainerState {
  Policy policy;
  Adam optimizer;
  Rng rng;

  TrainerState(Policy p, const PPOConfig& cfg, std::uint64_t seed);
};

/// Builds the normalized batch from whole trajectories: GAE per trajectory,
/// then advantages standardized across the batch with a 1e-8 std floor.
PPOBatch make_batch(std::span<const Trajectory> trajectories, const PPOConfig& cfg);

/// Runs epochs_per_update passes of shuffled minibatch Adam steps with global
/// norm clipping and log_std clamping. Returns one UpdateStats per epoch,
/// each measured on the full batch at the parameters the epoch starts from.
/// Throws InputError when no trajectory has transitions.
std::vector<UpdateStats> ppo_update(TrainerState& state, std::span<const Trajectory> trajectories,
                                    const PPOConfig& cfg);

}  // namespace rldecode
