#include "rldecode/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rldecode/errors.hpp"
#include "rldecode/sampling.hpp"

namespace rldecode {

void PPOConfig::validate() const {
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) throw ConfigError("clip_eps must lie in (0, 1)");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0, 1]");
  if (epochs_per_update < 1 || episodes_per_update < 1 || minibatch_size < 1) {
    throw ConfigError("update schedule values must be >= 1");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("grad_clip_norm must be positive");
  if (max_episode_len < 1) throw ConfigError("max_episode_len must be >= 1");
  if (act_every < 1) throw ConfigError("act_every must be >= 1");
}

std::string to_string(TerminalReason reason) {
  return reason == TerminalReason::eos ? "eos" : "length_limit";
}

// ---------------------------------------------------------------------------
// Rollout

Trajectory run_episode(const LanguageModel& lm, const Policy& policy, const RewardFn& reward_fn,
                       std::span<const TokenId> prompt, Rng& rng, const EpisodeOptions& options) {
  const Vocab& vocab = lm.vocab();
  std::vector<TokenId> prefix(prompt.begin(), prompt.end());
  Trajectory traj;
  ActionParams action;
  double sum_t = 0.0;
  double sum_p = 0.0;

  for (std::size_t step = 0; step < options.max_len; ++step) {
    StepOutput out = lm.next_logits(prefix);
    out.prefix_len = step;

    if (step % options.act_every == 0) {
      const ProbVector probs = softmax(out.logits);
      StateVector state = build_state(out, probs, options.features);
      const auto head = policy.forward(state);
      action = options.deterministic ? mean_action(head.mean, head.log_std)
                                     : sample_action(head.mean, head.log_std, rng);
      traj.transitions.push_back({std::move(state), action, head.value, 0.0});
    }
    sum_t += action.temperature;
    sum_p += action.top_p;

    const SamplerSettings settings(action.temperature, action.top_p);
    const TokenId next = decode_step(out.logits, settings, rng);
    if (next == vocab.eos()) {
      traj.terminal_reason = TerminalReason::eos;
      break;
    }
    prefix.push_back(next);
    traj.tokens.push_back(vocab.token_of(next));
  }
  if (traj.tokens.size() == options.max_len) traj.terminal_reason = TerminalReason::length_limit;

  const double steps = static_cast<double>(traj.tokens.size() +
                                           (traj.terminal_reason == TerminalReason::eos ? 1 : 0));
  traj.mean_temperature = sum_t / steps;
  traj.mean_top_p = sum_p / steps;
  traj.text = detokenize(traj.tokens);
  traj.composite_reward =
      reward_fn(EpisodeOutcome{traj.tokens, traj.text, traj.mean_temperature, traj.mean_top_p});
  traj.transitions.back().reward = traj.composite_reward;
  return traj;
}

// ---------------------------------------------------------------------------
// Advantages

AdvantageEstimate compute_gae(std::span<const double> rewards, std::span<const double> values,
                              double gamma, double lambda) {
  if (rewards.size() != values.size()) throw InputError("rewards and values differ in length");
  if (rewards.empty()) throw InputError("GAE needs at least one step");
  const auto n = static_cast<Eigen::Index>(rewards.size());
  AdvantageEstimate est{VecXd(n), VecXd(n)};
  double running = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const double next_value = t + 1 < n ? values[static_cast<std::size_t>(t + 1)] : 0.0;
    const double delta = rewards[static_cast<std::size_t>(t)] + gamma * next_value -
                         values[static_cast<std::size_t>(t)];
    running = delta + gamma * lambda * running;
    est.advantages[t] = running;
    est.returns[t] = running + values[static_cast<std::size_t>(t)];
  }
  return est;
}

// ---------------------------------------------------------------------------
// Losses

PPOBatch PPOBatch::select(std::span<const Eigen::Index> columns) const {
  const auto n = static_cast<Eigen::Index>(columns.size());
  PPOBatch out{MatXd(states.rows(), n), MatXd(2, n), VecXd(n), VecXd(n), VecXd(n)};
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Index c = columns[static_cast<std::size_t>(j)];
    out.states.col(j) = states.col(c);
    out.raw_actions.col(j) = raw_actions.col(c);
    out.old_log_probs[j] = old_log_probs[c];
    out.advantages[j] = advantages[c];
    out.returns[j] = returns[c];
  }
  return out;
}

namespace {

struct SampleTerms {
  MatXd d_mean;
  MatXd d_value;
  Vec2<double> d_log_std = Vec2<double>::Zero();
  double total = 0.0;
  UpdateStats stats;
};

// Loss and its gradient at the policy heads.
SampleTerms head_terms(const PPOBatch& batch, const ForwardCache<double>& cache,
                       const Vec2<double>& log_std, const PPOConfig& cfg) {
  const Eigen::Index n = batch.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Eigen::Array2d inv_sigma = (-log_std.array()).exp();

  SampleTerms out;
  out.d_mean.resize(2, n);
  out.d_value.resize(1, n);
  double clip_sum = 0.0;
  double value_sum = 0.0;
  double ratio_sum = 0.0;
  double clipped = 0.0;

  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::Array2d z = (batch.raw_actions.col(j) - cache.mean.col(j)).array() * inv_sigma;
    const double log_prob = (-half_log_2pi - log_std.array() - 0.5 * z.square()).sum();
    const double ratio = std::exp(log_prob - batch.old_log_probs[j]);
    const double adv = batch.advantages[j];
    const double unclipped = ratio * adv;
    const double bounded = std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
    const double objective = std::min(unclipped, bounded);
    // The clipped branch is constant in theta, so only the unclipped one
    // carries gradient.
    const double d_obj_d_logp = unclipped <= bounded ? unclipped : 0.0;
    const double d_total_d_logp = -inv_n * d_obj_d_logp;

    out.d_mean.col(j) = (d_total_d_logp * z * inv_sigma).matrix();
    out.d_log_std += (d_total_d_logp * (z.square() - 1.0)).matrix();

    const double err = cache.value(0, j) - batch.returns[j];
    out.d_value(0, j) = cfg.value_coef * 2.0 * err * inv_n;

    clip_sum += objective;
    value_sum += err * err;
    ratio_sum += ratio;
    if (std::abs(ratio - 1.0) > cfg.clip_eps) clipped += 1.0;
  }

  const double entropy = gaussian_entropy<double>(log_std);
  out.d_log_std.array() -= cfg.entropy_coef;

  out.stats.mean_ratio = ratio_sum * inv_n;
  out.stats.clip_fraction = clipped * inv_n;
  out.stats.policy_loss = -clip_sum * inv_n;
  out.stats.value_loss = value_sum * inv_n;
  out.stats.entropy = entropy;
  out.total = out.stats.policy_loss + cfg.value_coef * out.stats.value_loss - cfg.entropy_coef * entropy;
  return out;
}

}  // namespace

LossResult ppo_losses(const PPOBatch& batch, const Policy& policy, const PPOConfig& cfg) {
  ForwardCache<double> cache;
  policy.forward_batch(batch.states, cache);
  SampleTerms terms = head_terms(batch, cache, policy.params().log_std, cfg);
  LossResult result;
  result.total = terms.total;
  result.stats = terms.stats;
  result.grads = policy.backward(cache, terms.d_mean, terms.d_value, terms.d_log_std);
  result.stats.grad_norm = std::sqrt(result.grads.squared_norm());
  return result;
}

double ppo_total_loss(const PPOBatch& batch, const Policy& policy, const PPOConfig& cfg) {
  ForwardCache<double> cache;
  policy.forward_batch(batch.states, cache);
  return head_terms(batch, cache, policy.params().log_std, cfg).total;
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(const PolicyDims& dims, double lr, double beta1, double beta2, double eps)
    : m_(PolicyParams<double>::zeros(dims)),
      v_(PolicyParams<double>::zeros(dims)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void Adam::step(PolicyParams<double>& params, const PolicyParams<double>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

  // Walk the four containers in lockstep; visit order is fixed.
  std::vector<double*> m_ptrs, v_ptrs, p_ptrs;
  std::vector<const double*> g_ptrs;
  std::vector<Eigen::Index> sizes;
  m_.visit([&](std::string_view, auto& t) { m_ptrs.push_back(t.data()); sizes.push_back(t.size()); });
  v_.visit([&](std::string_view, auto& t) { v_ptrs.push_back(t.data()); });
  params.visit([&](std::string_view, auto& t) { p_ptrs.push_back(t.data()); });
  grads.visit([&](std::string_view, const auto& t) { g_ptrs.push_back(t.data()); });

  for (std::size_t k = 0; k < sizes.size(); ++k) {
    Eigen::Map<VecXd> m(m_ptrs[k], sizes[k]);
    Eigen::Map<VecXd> v(v_ptrs[k], sizes[k]);
    Eigen::Map<VecXd> p(p_ptrs[k], sizes[k]);
    Eigen::Map<const VecXd> g(g_ptrs[k], sizes[k]);
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }
}

TrainerState::TrainerState(Policy p, const PPOConfig& cfg, std::uint64_t seed)
    : policy(std::move(p)),
      optimizer(policy.dims(), cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps),
      rng(seed) {}

// ---------------------------------------------------------------------------
// Update

PPOBatch make_batch(std::span<const Trajectory> trajectories, const PPOConfig& cfg) {
  Eigen::Index total = 0;
  Eigen::Index state_len = 0;
  for (const auto& tr : trajectories) {
    total += static_cast<Eigen::Index>(tr.transitions.size());
    if (!tr.transitions.empty()) state_len = tr.transitions.front().state.size();
  }
  if (total == 0) throw InputError("PPO update needs at least one transition");

  PPOBatch batch{MatXd(state_len, total), MatXd(2, total), VecXd(total), VecXd(total), VecXd(total)};
  Eigen::Index col = 0;
  for (const auto& tr : trajectories) {
    if (tr.transitions.empty()) continue;
    std::vector<double> rewards;
    std::vector<double> values;
    for (const auto& t : tr.transitions) {
      rewards.push_back(t.reward);
      values.push_back(t.value);
    }
    const AdvantageEstimate est = compute_gae(rewards, values, cfg.gamma, cfg.lambda);
    for (std::size_t i = 0; i < tr.transitions.size(); ++i, ++col) {
      const auto& t = tr.transitions[i];
      if (t.state.size() != state_len) throw InputError("state length changed within a batch");
      batch.states.col(col) = t.state;
      batch.raw_actions.col(col) = t.action.raw;
      batch.old_log_probs[col] = t.action.log_prob;
      batch.advantages[col] = est.advantages[static_cast<Eigen::Index>(i)];
      batch.returns[col] = est.returns[static_cast<Eigen::Index>(i)];
    }
  }

  const double mean = batch.advantages.mean();
  const double var = (batch.advantages.array() - mean).square().mean();
  const double std = std::max(std::sqrt(var), 1e-8);
  batch.advantages = ((batch.advantages.array() - mean) / std).matrix();
  return batch;
}

std::vector<UpdateStats> ppo_update(TrainerState& state, std::span<const Trajectory> trajectories,
                                    const PPOConfig& cfg) {
  if (trajectories.empty()) throw InputError("PPO update needs at least one trajectory");
  const PPOBatch batch = make_batch(trajectories, cfg);
  const Eigen::Index n = batch.size();
  const auto mb = static_cast<Eigen::Index>(cfg.minibatch_size);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::vector<UpdateStats> per_epoch;
  for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
    UpdateStats stats;
    {
      ForwardCache<double> cache;
      state.policy.forward_batch(batch.states, cache);
      stats = head_terms(batch, cache, state.policy.params().log_std, cfg).stats;
    }

    std::iota(order.begin(), order.end(), Eigen::Index{0});
    shuffle(order, state.rng);
    double norm_sum = 0.0;
    int steps = 0;
    for (Eigen::Index start = 0; start < n; start += mb) {
      const Eigen::Index len = std::min(mb, n - start);
      const PPOBatch mini =
          batch.select(std::span<const Eigen::Index>(order.data() + start, static_cast<std::size_t>(len)));
      LossResult loss = ppo_losses(mini, state.policy, cfg);
      norm_sum += loss.stats.grad_norm;
      ++steps;
      if (loss.stats.grad_norm > cfg.grad_clip_norm) {
        loss.grads.scale(cfg.grad_clip_norm / loss.stats.grad_norm);
      }
      state.optimizer.step(state.policy.params(), loss.grads);
      state.policy.clamp_log_std();
    }
    stats.grad_norm = norm_sum / steps;
    per_epoch.push_back(stats);
  }
  return per_epoch;
}

}  // namespace rldecode
