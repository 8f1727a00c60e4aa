#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "rldecode/errors.hpp"
#include "rldecode/lm_core.hpp"
#include "rldecode/rng.hpp"

using namespace rldecode;

namespace {

std::vector<std::string> words(std::initializer_list<const char*> w) { return {w.begin(), w.end()}; }

}  // namespace

TEST(Tokenize, EmptyInput) { EXPECT_TRUE(tokenize("").empty()); }

TEST(Tokenize, SentenceWithPeriod) {
  EXPECT_EQ(tokenize("The cat sat."), words({"the", "cat", "sat", "."}));
}

TEST(Tokenize, CommaAndDoubleSpace) {
  EXPECT_EQ(tokenize("Hello,  world!"), words({"hello", "world", "!"}));
}

TEST(Tokenize, MatchesRegexOracle) {
  const std::vector<std::string> cases = {
      "A quick test.", "What?!", "...", "(quoted) words, here.", "x.y.z", "Done!?  Really.", "  leading space",
      "MiXeD CaSe!!", "'single' \"double\"", "end...", "a - b", "tab\there."};
  for (const auto& c : cases) EXPECT_EQ(tokenize(c), oracle::tokenize(c)) << c;
}

TEST(Detokenize, AttachesSentenceMarks) {
  EXPECT_EQ(detokenize(words({"the", "cat", "sat", "."})), "the cat sat.");
  EXPECT_EQ(detokenize(words({"hi", "!", "you"})), "hi! you");
}

TEST(Vocab, ReservedIdsAndUnknowns) {
  Vocab v;
  EXPECT_EQ(v.size(), 2u);
  EXPECT_EQ(v.lookup("<eos>"), v.eos());
  const TokenId a = v.add("alpha");
  EXPECT_EQ(v.add("alpha"), a);
  EXPECT_EQ(v.lookup("missing"), v.unk());
  EXPECT_EQ(v.decode(v.encode(words({"alpha", "zzz"}))), words({"alpha", "<unk>"}));
}

TEST(NGram, EmptyCorpusIsConfigError) {
  EXPECT_THROW(build_ngram_lm({}), ConfigError);
}

TEST(NGram, BigramArgmaxFollowsCounts) {
  NGramOptions opt;
  opt.order = 2;
  const auto lm = build_ngram_lm({words({"a", "b", "a", "b"})}, opt);
  const TokenId a = lm.vocab().lookup("a");
  const TokenId b = lm.vocab().lookup("b");
  const std::vector<TokenId> prefix{a};
  EXPECT_EQ(lm.count(prefix, b), 2.0);
  Eigen::Index best = 0;
  lm.next_logits(prefix).logits.maxCoeff(&best);
  EXPECT_EQ(best, b);
}

TEST(NGram, ConditionalIsAddKSmoothedCount) {
  NGramOptions opt;
  opt.order = 2;
  opt.smoothing_k = 0.5;
  const auto lm = build_ngram_lm({words({"a", "b", "a", "b"})}, opt);
  const double v = static_cast<double>(lm.vocab().size());
  const TokenId a = lm.vocab().lookup("a");
  const std::vector<TokenId> prefix{a};
  const VecXd p = lm.conditional(prefix);
  // context "a" seen twice, both followed by "b"
  EXPECT_NEAR(p[lm.vocab().lookup("b")], (2.0 + 0.5) / (2.0 + 0.5 * v), 1e-15);
  EXPECT_NEAR(p[lm.vocab().lookup("a")], 0.5 / (2.0 + 0.5 * v), 1e-15);
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

TEST(NGram, UnseenContextIsUniform) {
  const auto lm = build_ngram_lm({words({"x", "y", "z", "."})});
  const std::vector<TokenId> prefix{lm.vocab().lookup("z"), lm.vocab().lookup("z")};
  const VecXd p = softmax(lm.next_logits(prefix).logits);
  const double u = 1.0 / static_cast<double>(lm.vocab().size());
  for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], u, 1e-12);
}

TEST(NGram, DistributionsNormalizedAndPositive) {
  const auto lm = build_ngram_lm({words({"the", "cat", "sat", "on", "the", "mat", "."}),
                                  words({"the", "dog", "sat", "."})});
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TokenId> prefix;
    const auto len = rng.below(5);
    for (std::uint64_t i = 0; i < len; ++i) prefix.push_back(static_cast<TokenId>(rng.below(lm.vocab().size())));
    const VecXd p = lm.conditional(prefix);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    EXPECT_GT(p.minCoeff(), 0.0);
  }
}

TEST(NGram, StepOutputIsDeterministic) {
  const auto lm = build_ngram_lm({words({"a", "b", "c", "."})});
  const std::vector<TokenId> prefix{lm.vocab().lookup("a"), lm.vocab().lookup("b")};
  const StepOutput s1 = lm.next_logits(prefix);
  const StepOutput s2 = lm.next_logits(prefix);
  ASSERT_TRUE(s1.hidden_summary && s2.hidden_summary);
  EXPECT_EQ(s1.logits, s2.logits);
  EXPECT_EQ(*s1.hidden_summary, *s2.hidden_summary);
  EXPECT_EQ(s1.hidden_summary->size(), 32);
  EXPECT_EQ(s1.prefix_len, 2u);
}
