#pragma once

#include <type_traits>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string_view>

#include "rldecode/errors.hpp"
#include "rldecode/fwd.hpp"
#include "rldecode/rng.hpp"

namespace rldecode {

struct PolicyDims {
  Eigen::Index state_len = 84;
  Eigen::Index input_dim = 64;
  Eigen::Index hidden = 256;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kLayerNormEps = 1e-5;

/// All trainable tensors of the controller. Also used as the gradient
/// container, since gradients share the parameter layout.
template <typename Scalar>
struct PolicyParams {
  Mat<Scalar> proj_w;  // input_dim x state_len
  Vec<Scalar> proj_b;
  Vec<Scalar> ln_gain;
  Vec<Scalar> ln_bias;
  Mat<Scalar> w1;  // hidden x input_dim
  Vec<Scalar> b1;
  Mat<Scalar> w2;  // hidden x hidden
  Vec<Scalar> b2;
  Mat<Scalar> mean_w;  // 2 x hidden
  Vec<Scalar> mean_b;
  Vec<Scalar> log_std;  // 2, state independent
  Mat<Scalar> value_w;  // 1 x hidden
  Vec<Scalar> value_b;  // 1

  static PolicyParams zeros(const PolicyDims& d) {
    PolicyParams p;
    p.proj_w = Mat<Scalar>::Zero(d.input_dim, d.state_len);
    p.proj_b = Vec<Scalar>::Zero(d.input_dim);
    p.ln_gain = Vec<Scalar>::Zero(d.input_dim);
    p.ln_bias = Vec<Scalar>::Zero(d.input_dim);
    p.w1 = Mat<Scalar>::Zero(d.hidden, d.input_dim);
    p.b1 = Vec<Scalar>::Zero(d.hidden);
    p.w2 = Mat<Scalar>::Zero(d.hidden, d.hidden);
    p.b2 = Vec<Scalar>::Zero(d.hidden);
    p.mean_w = Mat<Scalar>::Zero(2, d.hidden);
    p.mean_b = Vec<Scalar>::Zero(2);
    p.log_std = Vec<Scalar>::Zero(2);
    p.value_w = Mat<Scalar>::Zero(1, d.hidden);
    p.value_b = Vec<Scalar>::Zero(1);
    return p;
  }

  PolicyDims dims() const { return {proj_w.cols(), proj_w.rows(), w1.rows()}; }

  /// Visits every tensor in declaration order: f(name, tensor).
  template <typename F>
  void visit(F&& f) {
    f(std::string_view("proj_w"), proj_w);
    f(std::string_view("proj_b"), proj_b);
    f(std::string_view("ln_gain"), ln_gain);
    f(std::string_view("ln_bias"), ln_bias);
    f(std::string_view("w1"), w1);
    f(std::string_view("b1"), b1);
    f(std::string_view("w2"), w2);
    f(std::string_view("b2"), b2);
    f(std::string_view("mean_w"), mean_w);
    f(std::string_view("mean_b"), mean_b);
    f(std::string_view("log_std"), log_std);
    f(std::string_view("value_w"), value_w);
    f(std::string_view("value_b"), value_b);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<PolicyParams*>(this)->visit([&](std::string_view name, const auto& t) { f(name, t); });
  }

  std::size_t num_params() const {
    std::size_t n = 0;
    visit([&](std::string_view, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    visit([&](std::string_view, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

  Scalar squared_norm() const {
    Scalar s(0);
    visit([&](std::string_view, const auto& t) { s += t.squaredNorm(); });
    return s;
  }

  void scale(Scalar factor) {
    visit([&](std::string_view, auto& t) { t *= factor; });
  }

  /// Flat copy in visit order, for finite-difference checks and hashing.
  Vec<Scalar> flatten() const {
    Vec<Scalar> out(static_cast<Eigen::Index>(num_params()));
    Eigen::Index at = 0;
    visit([&](std::string_view, const auto& t) {
      out.segment(at, t.size()) = Eigen::Map<const Vec<Scalar>>(t.data(), t.size());
      at += t.size();
    });
    return out;
  }

  void unflatten(const Vec<Scalar>& flat) {
    Eigen::Index at = 0;
    visit([&](std::string_view, auto& t) {
      Eigen::Map<Vec<Scalar>>(t.data(), t.size()) = flat.segment(at, t.size());
      at += t.size();
    });
  }
};

template <typename Scalar>
Scalar gelu(Scalar x) {
  const Scalar c = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  return Scalar(0.5) * x * (Scalar(1) + std::tanh(c * (x + Scalar(0.044715) * x * x * x)));
}

template <typename Scalar>
Scalar gelu_grad(Scalar x) {
  const Scalar c = std::sqrt(Scalar(2) / std::numbers::pi_v<Scalar>);
  const Scalar t = std::tanh(c * (x + Scalar(0.044715) * x * x * x));
  return Scalar(0.5) * (Scalar(1) + t) +
         Scalar(0.5) * x * (Scalar(1) - t * t) * c * (Scalar(1) + Scalar(3 * 0.044715) * x * x);
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

/// Intermediates of a batched forward pass; columns are samples.
template <typename Scalar>
struct ForwardCache {
  Mat<Scalar> states;
  Mat<Scalar> xhat;      // normalized projection
  Vec<Scalar> inv_std;   // per sample 1/sqrt(var + eps)
  Mat<Scalar> ln_out;
  Mat<Scalar> a1, h1, a2, h2;
  Mat<Scalar> mean;      // 2 x B
  Mat<Scalar> value;     // 1 x B
};

template <typename Scalar>
struct PolicyOutput {
  Vec2<Scalar> mean;
  Vec2<Scalar> log_std;
  Scalar value;
};

/// Input projection with layer norm, two GELU layers, and Gaussian mean and
/// value heads sharing the trunk.
template <typename Scalar>
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  explicit GaussianPolicy(PolicyParams<Scalar> params) : params_(std::move(params)) {}

  /// Gaussian init scaled by 1/sqrt(fan_in); the mean head starts near zero
  /// so the initial actions sit at the middle of both ranges.
  static GaussianPolicy random(const PolicyDims& d, Rng& rng, Scalar mean_head_scale = Scalar(0.01),
                               Scalar init_log_std = Scalar(0)) {
    auto p = PolicyParams<Scalar>::zeros(d);
    auto fill = [&](Mat<Scalar>& m, Scalar scale) {
      const Scalar s = scale / std::sqrt(static_cast<Scalar>(m.cols()));
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = s * static_cast<Scalar>(rng.normal());
      }
    };
    fill(p.proj_w, Scalar(1));
    p.ln_gain.setOnes();
    fill(p.w1, Scalar(1));
    fill(p.w2, Scalar(1));
    fill(p.mean_w, mean_head_scale);
    fill(p.value_w, Scalar(1));
    p.log_std.setConstant(init_log_std);
    return GaussianPolicy(std::move(p));
  }

  const PolicyParams<Scalar>& params() const { return params_; }
  PolicyParams<Scalar>& params() { return params_; }
  PolicyDims dims() const { return params_.dims(); }

  /// Batched forward; `states` is state_len x B.
  void forward_batch(const MatRef<Scalar>& states, ForwardCache<Scalar>& cache) const {
    const auto& p = params_;
    if (states.rows() != p.proj_w.cols()) {
      throw ConfigError("state length " + std::to_string(states.rows()) +
                        " does not match policy input " + std::to_string(p.proj_w.cols()));
    }
    const Eigen::Index batch = states.cols();
    const Eigen::Index d = p.proj_w.rows();
    cache.states = states;

    Mat<Scalar> z = p.proj_w * states;
    z.colwise() += p.proj_b;
    cache.xhat.resize(d, batch);
    cache.inv_std.resize(batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
      const Scalar mu = z.col(j).mean();
      const Scalar var = (z.col(j).array() - mu).square().mean();
      const Scalar inv = Scalar(1) / std::sqrt(var + Scalar(kLayerNormEps));
      cache.inv_std[j] = inv;
      cache.xhat.col(j) = (z.col(j).array() - mu) * inv;
    }
    cache.ln_out = (cache.xhat.array().colwise() * p.ln_gain.array()).matrix();
    cache.ln_out.colwise() += p.ln_bias;

    cache.a1 = p.w1 * cache.ln_out;
    cache.a1.colwise() += p.b1;
    cache.h1 = cache.a1.unaryExpr([](Scalar x) { return gelu(x); });
    cache.a2 = p.w2 * cache.h1;
    cache.a2.colwise() += p.b2;
    cache.h2 = cache.a2.unaryExpr([](Scalar x) { return gelu(x); });

    cache.mean = p.mean_w * cache.h2;
    cache.mean.colwise() += p.mean_b;
    cache.value = p.value_w * cache.h2;
    cache.value.array() += p.value_b[0];
  }

  PolicyOutput<Scalar> forward(const VecRef<Scalar>& state) const {
    ForwardCache<Scalar> cache;
    forward_batch(state, cache);
    return {cache.mean.col(0), params_.log_std, cache.value(0, 0)};
  }

  /// Reverse pass. `d_mean` (2 x B) and `d_value` (1 x B) are loss gradients
  /// at the heads; `d_log_std` is the direct gradient on log_std. Returns
  /// gradients in parameter layout.
  PolicyParams<Scalar> backward(const ForwardCache<Scalar>& cache, const MatRef<Scalar>& d_mean,
                                const MatRef<Scalar>& d_value, const Vec2<Scalar>& d_log_std) const {
    const auto& p = params_;
    PolicyParams<Scalar> g;
    g.mean_w = d_mean * cache.h2.transpose();
    g.mean_b = d_mean.rowwise().sum();
    g.value_w = d_value * cache.h2.transpose();
    g.value_b = d_value.rowwise().sum();
    g.log_std = d_log_std;

    Mat<Scalar> dh2 = p.mean_w.transpose() * d_mean + p.value_w.transpose() * d_value;
    Mat<Scalar> da2 = dh2.cwiseProduct(cache.a2.unaryExpr([](Scalar x) { return gelu_grad(x); }));
    g.w2 = da2 * cache.h1.transpose();
    g.b2 = da2.rowwise().sum();

    Mat<Scalar> dh1 = p.w2.transpose() * da2;
    Mat<Scalar> da1 = dh1.cwiseProduct(cache.a1.unaryExpr([](Scalar x) { return gelu_grad(x); }));
    g.w1 = da1 * cache.ln_out.transpose();
    g.b1 = da1.rowwise().sum();

    Mat<Scalar> dy = p.w1.transpose() * da1;
    g.ln_gain = dy.cwiseProduct(cache.xhat).rowwise().sum();
    g.ln_bias = dy.rowwise().sum();

    Mat<Scalar> dxhat = (dy.array().colwise() * p.ln_gain.array()).matrix();
    Mat<Scalar> dz(dxhat.rows(), dxhat.cols());
    for (Eigen::Index j = 0; j < dxhat.cols(); ++j) {
      const Scalar m1 = dxhat.col(j).mean();
      const Scalar m2 = dxhat.col(j).cwiseProduct(cache.xhat.col(j)).mean();
      dz.col(j) = cache.inv_std[j] * (dxhat.col(j).array() - m1 - cache.xhat.col(j).array() * m2);
    }
    g.proj_w = dz * cache.states.transpose();
    g.proj_b = dz.rowwise().sum();
    return g;
  }

  void clamp_log_std() {
    params_.log_std = params_.log_std.cwiseMax(Scalar(kLogStdMin)).cwiseMin(Scalar(kLogStdMax));
  }

 private:
  PolicyParams<Scalar> params_;
};

using Policy = GaussianPolicy<double>;

// ---------------------------------------------------------------------------
// Diagonal Gaussian over the raw (pre-squash) action.

template <typename Scalar>
Scalar gaussian_log_prob(const Vec2<Scalar>& mean, const Vec2<Scalar>& log_std, const Vec2<Scalar>& raw) {
  const Scalar half_log_2pi = Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  Scalar lp(0);
  for (int i = 0; i < 2; ++i) {
    const Scalar z = (raw[i] - mean[i]) * std::exp(-log_std[i]);
    lp += -half_log_2pi - log_std[i] - Scalar(0.5) * z * z;
  }
  return lp;
}

template <typename Scalar>
Scalar gaussian_entropy(const Vec2<Scalar>& log_std) {
  const Scalar c = Scalar(0.5) + Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  return Scalar(2) * c + log_std.sum();
}

struct ActionParams {
  Vec2<double> raw = Vec2<double>::Zero();
  double temperature = 0.7;
  double top_p = 0.9;
  double log_prob = 0.0;
};

inline double squash_temperature(double u) {
  return std::clamp(0.2 + sigmoid(u) * 1.0, 0.2, 1.2);
}
inline double squash_top_p(double u) {
  return std::clamp(0.8 + sigmoid(u) * 0.2, 0.8, 1.0);
}

/// Squashes a raw action; log_prob is left for the caller.
inline ActionParams squash_action(const Vec2<double>& raw) {
  ActionParams a;
  a.raw = raw;
  a.temperature = squash_temperature(raw[0]);
  a.top_p = squash_top_p(raw[1]);
  return a;
}

/// u = mean + exp(log_std) * z with z from one Box-Muller pair.
inline ActionParams sample_action(const Vec2<double>& mean, const Vec2<double>& log_std, Rng& rng) {
  const auto [z0, z1] = rng.normal_pair();
  const Vec2<double> raw = mean + (log_std.array().exp() * Eigen::Array2d(z0, z1)).matrix();
  ActionParams a = squash_action(raw);
  a.log_prob = gaussian_log_prob<double>(mean, log_std, raw);
  return a;
}

/// Zero-noise action: the squashed mean.
inline ActionParams mean_action(const Vec2<double>& mean, const Vec2<double>& log_std) {
  ActionParams a = squash_action(mean);
  a.log_prob = gaussian_log_prob<double>(mean, log_std, mean);
  return a;
}

template <typename Scalar>
Scalar log_prob_of(const GaussianPolicy<Scalar>& policy, const std::type_identity_t<VecRef<Scalar>>& state,
                   const std::type_identity_t<Vec2<Scalar>>& raw) {
  const auto out = policy.forward(state);
  return gaussian_log_prob<Scalar>(out.mean, out.log_std, raw);
}

}  // namespace rldecode
