#include <gtest/gtest.h>

#include <cmath>

#include "rldecode/errors.hpp"
#include "rldecode/sampling.hpp"

using namespace rldecode;

namespace {

VecXd vec(std::initializer_list<double> v) {
  VecXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Rng whose next uniform is known: search seeds for the first draw near u.
std::uint64_t seed_with_first_uniform(double lo, double hi) {
  for (std::uint64_t s = 0;; ++s) {
    Rng r(s);
    const double u = r.uniform();
    if (u >= lo && u < hi) return s;
  }
}

}  // namespace

TEST(Temperature, SymmetricLogitsStayUniform) {
  for (double t : {0.2, 0.7, 1.2}) {
    const VecXd p = apply_temperature(vec({1, 1, 1}), t);
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(p[i], 1.0 / 3.0, 1e-15);
  }
}

TEST(Temperature, ClosedFormSoftmax) {
  const VecXd p = apply_temperature(vec({0.0, std::log(2.0)}), 1.0);
  EXPECT_NEAR(p[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 2.0 / 3.0, 1e-15);
}

TEST(Temperature, NearZeroIsAlmostOneHot) {
  const VecXd p = apply_temperature(vec({1, 2}), 0.01);
  EXPECT_GT(p[1], 1.0 - 1e-9);
}

TEST(Temperature, RejectsNonPositive) {
  EXPECT_THROW(apply_temperature(vec({1, 2}), 0.0), ParameterError);
  EXPECT_THROW(apply_temperature(vec({1, 2}), -1.0), ParameterError);
}

TEST(Temperature, PreservesArgmaxAndSharpens) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    VecXd logits(8);
    for (Eigen::Index i = 0; i < 8; ++i) logits[i] = 3.0 * rng.normal();
    const double t1 = 0.2 + rng.uniform();
    const double t2 = t1 + 0.01 + rng.uniform();
    Eigen::Index a0 = 0, a1 = 0, a2 = 0;
    logits.maxCoeff(&a0);
    const VecXd p1 = apply_temperature(logits, t1);
    const VecXd p2 = apply_temperature(logits, t2);
    p1.maxCoeff(&a1);
    p2.maxCoeff(&a2);
    EXPECT_EQ(a0, a1);
    EXPECT_EQ(a0, a2);
    EXPECT_GE(p1.maxCoeff(), p2.maxCoeff());
  }
}

TEST(TopP, BoundaryTokenKept) {
  const VecXd p = top_p_filter(vec({0.5, 0.3, 0.2}), 0.8);
  EXPECT_NEAR(p[0], 0.625, 1e-12);
  EXPECT_NEAR(p[1], 0.375, 1e-12);
  EXPECT_EQ(p[2], 0.0);
}

TEST(TopP, FullMassUnchanged) {
  const VecXd in = vec({0.1, 0.6, 0.3});
  const VecXd out = top_p_filter(in, 1.0);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(out[i], in[i], 1e-15);
}

TEST(TopP, TopTokenAloneExceedsP) {
  const VecXd p = top_p_filter(vec({0.9, 0.1}), 0.5);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(p[1], 0.0);
}

TEST(TopP, RejectsOutOfRange) {
  EXPECT_THROW(top_p_filter(vec({0.5, 0.5}), 0.0), ParameterError);
  EXPECT_THROW(top_p_filter(vec({0.5, 0.5}), 1.5), ParameterError);
}

TEST(TopP, SupportGrowsWithP) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    VecXd logits(10);
    for (Eigen::Index i = 0; i < 10; ++i) logits[i] = rng.normal();
    const VecXd probs = apply_temperature(logits, 1.0);
    const double p1 = 0.05 + 0.9 * rng.uniform();
    const double p2 = p1 + (1.0 - p1) * rng.uniform();
    const VecXd f1 = top_p_filter(probs, p1);
    const VecXd f2 = top_p_filter(probs, p2);
    for (Eigen::Index i = 0; i < 10; ++i) {
      if (f1[i] > 0.0) EXPECT_GT(f2[i], 0.0);
    }
    EXPECT_NEAR(f1.sum(), 1.0, 1e-12);
  }
}

TEST(SampleToken, GreedyTakesArgmax) {
  Rng rng(0);
  EXPECT_EQ(sample_token(vec({0.1, 0.7, 0.2}), SamplerSettings::greedy(), rng), 1);
  EXPECT_EQ(argmax_token(vec({0.4, 0.4, 0.2})), 0);
}

TEST(SampleToken, DegenerateDistribution) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    EXPECT_EQ(sample_token(vec({1.0, 0.0, 0.0}), SamplerSettings(1.0, 1.0), rng), 0);
  }
}

TEST(SampleToken, InverseCdfBoundary) {
  EXPECT_EQ(sample_categorical(vec({0.5, 0.5}), 0.49), 0);
  EXPECT_EQ(sample_categorical(vec({0.5, 0.5}), 0.51), 1);
  Rng low(seed_with_first_uniform(0.48, 0.49));
  Rng high(seed_with_first_uniform(0.51, 0.52));
  EXPECT_EQ(sample_token(vec({0.5, 0.5}), SamplerSettings(1.0, 1.0), low), 0);
  EXPECT_EQ(sample_token(vec({0.5, 0.5}), SamplerSettings(1.0, 1.0), high), 1);
}

TEST(SampleToken, ConsumesExactlyOneUniform) {
  Rng a(9), b(9);
  sample_token(vec({0.2, 0.3, 0.5}), SamplerSettings(1.0, 1.0), a);
  b.uniform();
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(SampleToken, FrequenciesWithinThreeStandardErrors) {
  const VecXd probs = vec({0.05, 0.15, 0.3, 0.1, 0.4});
  constexpr int kDraws = 100000;
  std::vector<int> hits(5, 0);
  Rng rng(2024);
  for (int i = 0; i < kDraws; ++i) ++hits[static_cast<std::size_t>(sample_token(probs, SamplerSettings(1.0, 1.0), rng))];
  for (Eigen::Index k = 0; k < 5; ++k) {
    const double freq = hits[static_cast<std::size_t>(k)] / static_cast<double>(kDraws);
    const double se = std::sqrt(probs[k] * (1.0 - probs[k]) / kDraws);
    EXPECT_LT(std::abs(freq - probs[k]), 3.0 * se) << "bin " << k;
  }
}

TEST(DecodeStep, DeterministicGivenSeed) {
  const VecXd logits = vec({0.3, -1.0, 2.0, 0.5, 0.0});
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng a(s), b(s);
    EXPECT_EQ(decode_step(logits, SamplerSettings(0.8, 0.9), a), decode_step(logits, SamplerSettings(0.8, 0.9), b));
  }
}

TEST(SamplerSettings, RangeChecked) {
  EXPECT_THROW(SamplerSettings(0.1, 0.9), ParameterError);
  EXPECT_THROW(SamplerSettings(0.7, 0.7), ParameterError);
  EXPECT_NO_THROW(SamplerSettings(0.3, 1.0, SamplerMode::static_));
}
