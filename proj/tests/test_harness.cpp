#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "rldecode/errors.hpp"
#include "rldecode/harness.hpp"

using namespace rldecode;

namespace {

std::filesystem::path write_lines(const std::string& name, const std::vector<std::string>& lines) {
  const auto path = oracle::scratch_dir("ds_" + name) / "data.jsonl";
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
  return path;
}

RunConfig small_run(const std::filesystem::path& dataset) {
  RunConfig cfg;
  cfg.dataset_path = dataset.string();
  cfg.n_prompts = 20;
  cfg.eval_prompts = 5;
  cfg.episodes = 16;
  cfg.eval_every = 8;
  cfg.seed = 3;
  cfg.ppo.max_episode_len = 24;
  return cfg;
}

const std::filesystem::path& toy_path() {
  static const std::filesystem::path path = [] {
    const auto p = oracle::scratch_dir("harness_toy") / "toy.jsonl";
    write_dataset(p.string(), make_toy_dataset(300, 1));
    return p;
  }();
  return path;
}

RunMetrics with_checkpoints(std::initializer_list<double> values) {
  RunMetrics m;
  std::size_t e = 0;
  for (double v : values) m.checkpoints.push_back({e++ * 10, v, 0.7});
  return m;
}

}  // namespace

TEST(Dataset, ValidFileInOrder) {
  const auto path = write_lines("valid", {R"({"id":"a","source":"s1","reference":"r1"})", "",
                                          R"({"id":"b","source":"s2","reference":"r2"})",
                                          R"({"id":"c","source":"s3","reference":"r3"})"});
  const auto recs = load_dataset(path.string());
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].id, "a");
  EXPECT_EQ(recs[2].reference, "r3");
}

TEST(Dataset, ErrorsNameTheLine) {
  const auto missing = write_lines("missing", {R"({"id":"a","source":"s","reference":"r"})",
                                               R"({"id":"b","source":"s"})"});
  try {
    load_dataset(missing.string());
    FAIL() << "expected IngestionError";
  } catch (const IngestionError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("reference"), std::string::npos);
  }
  const auto dup = write_lines("dup", {R"({"id":"a","source":"s","reference":"r"})",
                                       R"({"id":"a","source":"t","reference":"u"})"});
  EXPECT_THROW(load_dataset(dup.string()), IngestionError);
  const auto empty = write_lines("empty", {R"({"id":"a","source":"","reference":"r"})"});
  EXPECT_THROW(load_dataset(empty.string()), IngestionError);
  const auto bad = write_lines("bad", {"{not json"});
  EXPECT_THROW(load_dataset(bad.string()), IngestionError);
  EXPECT_THROW(load_dataset("/nonexistent/file.jsonl"), IngestionError);
}

TEST(Dataset, WriteReadRoundTrip) {
  const auto recs = make_toy_dataset(10, 4);
  const auto path = oracle::scratch_dir("ds_roundtrip") / "toy.jsonl";
  write_dataset(path.string(), recs);
  const auto back = load_dataset(path.string());
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(back[i].id, recs[i].id);
    EXPECT_EQ(back[i].source, recs[i].source);
    EXPECT_EQ(back[i].reference, recs[i].reference);
  }
}

TEST(Split, DisjointAndSized) {
  const PromptSplit s = split_prompts(50, 30, 10, 7);
  EXPECT_EQ(s.train.size(), 30u);
  EXPECT_EQ(s.eval.size(), 10u);
  std::set<std::size_t> train(s.train.begin(), s.train.end());
  for (auto i : s.eval) EXPECT_EQ(train.count(i), 0u);
  EXPECT_THROW(split_prompts(5, 3, 5, 7), ConfigError);
}

TEST(Seed, EnvironmentOverride) {
  ::setenv("RLDECODE_SEED", "42", 1);
  EXPECT_EQ(seed_from_env(7), 42u);
  ::setenv("RLDECODE_SEED", "x1", 1);
  EXPECT_THROW(seed_from_env(7), ConfigError);
  ::unsetenv("RLDECODE_SEED");
  EXPECT_EQ(seed_from_env(7), 7u);
}

TEST(Baseline, GreedyIgnoresSeed) {
  RunConfig cfg = small_run(toy_path());
  const RunContext ctx = RunContext::load(cfg);
  const auto reward = RewardConfig::for_variant(RewardVariant::proposed);
  const auto a = run_baseline(ctx.eval_records(), BaselineMode::greedy, reward, *ctx.lm, 1, 0.3, 24);
  const auto b = run_baseline(ctx.eval_records(), BaselineMode::greedy, reward, *ctx.lm, 999, 0.3, 24);
  ASSERT_EQ(a.episodes.size(), b.episodes.size());
  for (std::size_t i = 0; i < a.episodes.size(); ++i) EXPECT_EQ(a.episodes[i].reward, b.episodes[i].reward);
}

TEST(Baseline, StaticDeterministicAndBounded) {
  RunConfig cfg = small_run(toy_path());
  const RunContext ctx = RunContext::load(cfg);
  const auto reward = RewardConfig::for_variant(RewardVariant::proposed);
  const auto a = run_baseline(ctx.eval_records(), BaselineMode::static_, reward, *ctx.lm, 5, 0.3, 24);
  const auto b = run_baseline(ctx.eval_records(), BaselineMode::static_, reward, *ctx.lm, 5, 0.3, 24);
  for (std::size_t i = 0; i < a.episodes.size(); ++i) {
    EXPECT_EQ(a.episodes[i].reward, b.episodes[i].reward);
    EXPECT_GE(a.episodes[i].reward, 0.0);
    EXPECT_LE(a.episodes[i].reward, 1.0);
  }
  EXPECT_THROW(parse_baseline_mode("beam"), ConfigError);
}

TEST(EarlyLate, Formula) {
  EXPECT_NEAR(early_late_change(with_checkpoints({0.20, 0.3, 0.25})), 25.0, 1e-12);
  EXPECT_EQ(early_late_change(with_checkpoints({0.4, 0.4})), 0.0);
  EXPECT_TRUE(std::isnan(early_late_change(with_checkpoints({0.0, 0.4}))));
  EXPECT_THROW(early_late_change(with_checkpoints({0.4})), InputError);
}

TEST(Compare, TableOneDelta) {
  EXPECT_EQ(format_percent(percent_delta(0.390, 0.333)), "+17.12");
  EXPECT_EQ(format_percent(percent_delta(0.3, 0.3)), "+0.00");
  EXPECT_EQ(format_percent(percent_delta(0.3, 0.0)), "n/a");
  EXPECT_EQ(format_percent(22.88), "+22.88");
  EXPECT_EQ(format_percent(-0.59), "-0.59");
}

TEST(Compare, SignAntisymmetric) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const double a = 0.01 + rng.uniform(), b = 0.01 + rng.uniform();
    if (a == b) continue;
    EXPECT_EQ(percent_delta(a, b) > 0.0, percent_delta(b, a) < 0.0);
  }
}

TEST(Compare, VariantMismatch) {
  RunMetrics p = with_checkpoints({0.2, 0.3});
  RunMetrics g = with_checkpoints({0.1});
  RunMetrics s = with_checkpoints({0.15});
  const ComparisonRow row = compare(p, g, s);
  EXPECT_NEAR(row.delta_greedy, 200.0, 1e-9);
  EXPECT_NEAR(row.early_late, 50.0, 1e-9);
  s.variant = RewardVariant::rouge_only;
  EXPECT_THROW(compare(p, g, s), ComparisonError);
}

TEST(Plot, MovingAverage) {
  EXPECT_EQ(moving_average({0.5, 0.5, 0.5, 0.5}, 3), (std::vector<double>{0.5, 0.5, 0.5, 0.5}));
  const auto alt = moving_average({0, 1, 0, 1, 0, 1}, 2);
  for (std::size_t i = 1; i < alt.size(); ++i) EXPECT_EQ(alt[i], 0.5);
  EXPECT_EQ(moving_average({1, 2, 3}, 10), (std::vector<double>{1.0, 1.5, 2.0}));
  EXPECT_THROW(moving_average({1.0}, 0), ParameterError);
}

TEST(Plot, EmitsSvgAndCsv) {
  std::vector<EpisodeRow> rows;
  for (std::size_t e = 1; e <= 30; ++e) rows.push_back({e, "p", 0.01 * static_cast<double>(e), 0.7, 0.9, 5});
  const auto dir = oracle::scratch_dir("plot");
  emit_plot(rows, 10, dir / "reward.svg");
  const std::string svg = oracle::slurp(dir / "reward.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  const std::string csv = oracle::slurp(dir / "reward.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "episode,reward,moving_avg");
  EXPECT_THROW(render_svg({}, 10), InputError);
}

TEST(Train, DeterministicOutputsAndDisjointPrompts) {
  const RunConfig cfg = small_run(toy_path());
  const auto a = train_run(cfg);
  const auto b = train_run(cfg);
  const auto da = oracle::scratch_dir("train_a"), db = oracle::scratch_dir("train_b");
  write_run_outputs(da, a.metrics);
  write_run_outputs(db, b.metrics);
  for (const char* f : {"episodes.csv", "checkpoints.csv", "eval_log.csv"}) {
    EXPECT_EQ(oracle::slurp(da / f), oracle::slurp(db / f)) << f;
  }
  EXPECT_EQ(a.policy.params().flatten(), b.policy.params().flatten());

  std::set<std::string> train(a.metrics.train_prompt_ids.begin(), a.metrics.train_prompt_ids.end());
  for (const auto& id : a.metrics.eval_prompt_ids) EXPECT_EQ(train.count(id), 0u);
  for (const auto& row : a.metrics.eval_log) EXPECT_EQ(train.count(row.prompt_id), 0u);
  for (const auto& row : a.metrics.episodes) EXPECT_EQ(train.count(row.prompt_id), 1u);

  ASSERT_EQ(a.metrics.episodes.size(), 16u);
  // checkpoints at 0, 8 and 16 episodes
  ASSERT_EQ(a.metrics.checkpoints.size(), 3u);
  EXPECT_EQ(a.metrics.checkpoints.back().episode, 16u);
  const std::string header = oracle::slurp(da / "episodes.csv");
  EXPECT_EQ(header.substr(0, header.find('\n')), "episode,prompt_id,reward,mean_T,mean_p,tokens,terminal");
  const std::string ck = oracle::slurp(da / "checkpoints.csv");
  EXPECT_EQ(ck.substr(0, ck.find('\n')), "episode,eval_avg_reward");
  EXPECT_EQ(read_episodes_csv(da / "episodes.csv").size(), 16u);
}

TEST(Train, EvaluationIsDeterministic) {
  const RunConfig cfg = small_run(toy_path());
  const RunContext ctx = RunContext::load(cfg);
  Rng rng(4);
  const Policy policy = Policy::random({static_cast<Eigen::Index>(cfg.features().state_len()), 64, 256}, rng);
  EpisodeOptions opt;
  opt.max_len = 24;
  opt.features = cfg.features();
  opt.deterministic = true;
  const auto reward = RewardConfig::for_variant(RewardVariant::proposed);
  const auto a = evaluate_policy(policy, ctx.eval_records(), *ctx.lm, reward, opt, 11);
  const auto b = evaluate_policy(policy, ctx.eval_records(), *ctx.lm, reward, opt, 11);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].reward, b[i].reward);
}

TEST(Train, RiggedRewardIgnoresText) {
  const DatasetRecord rec{"x", "source text.", "ref."};
  const auto fn = make_reward_fn(rec, RewardConfig{}, 0.4);
  const std::vector<std::string> toks{"anything"};
  const std::string text = "anything";
  EXPECT_NEAR(fn(EpisodeOutcome{toks, text, 0.7, 0.9}), 0.7, 1e-15);
  EXPECT_NEAR(fn(EpisodeOutcome{toks, text, 0.4, 0.9}), 1.0, 1e-15);
}

TEST(Ablate, TableHasEveryVariant) {
  RunConfig cfg = small_run(toy_path());
  cfg.episodes = 8;
  const auto rows = ablate(cfg, all_variants());
  ASSERT_EQ(rows.size(), 6u);
  const std::string table = format_comparison_table(rows);
  for (auto v : all_variants()) EXPECT_NE(table.find(std::string(variant_name(v))), std::string::npos);
  for (const auto& r : rows) {
    for (double x : {r.ppo, r.greedy, r.static_}) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}
