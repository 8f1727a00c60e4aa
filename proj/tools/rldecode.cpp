#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "rldecode/dataset.hpp"
#include "rldecode/errors.hpp"
#include "rldecode/harness.hpp"
#include "rldecode/remote_lm.hpp"

namespace fs = std::filesystem;
using namespace rldecode;

namespace {

std::vector<RewardVariant> parse_variant_list(const std::string& list) {
  if (list == "all") return all_variants();
  std::vector<RewardVariant> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (!name.empty()) out.push_back(parse_variant(name));
  }
  if (out.empty()) throw ConfigError("no reward variants given");
  return out;
}

void print_run_summary(const RunMetrics& m) {
  std::cout << "final_avg_reward " << m.final_avg_reward() << '\n';
  if (m.checkpoints.size() >= 2) std::cout << "early_late_percent " << format_percent(early_late_change(m)) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reinforcement-learned decoding controller"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string reward = "proposed";
  std::string out_dir;
  std::uint64_t seed = 0;
  std::optional<double> rigged;

  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("--dataset", cfg.dataset_path, "JSON-lines dataset (id, source, reference)")->required();
    sub->add_option("--reward", reward, "reward variant")->default_val("proposed");
    sub->add_option("--seed", seed, "run seed (RLDECODE_SEED overrides)")->default_val(0);
    sub->add_option("--n-prompts", cfg.n_prompts, "training prompts")->default_val(100);
    sub->add_option("--eval-prompts", cfg.eval_prompts, "held-out evaluation prompts")->default_val(20);
    sub->add_option("--max-len", cfg.ppo.max_episode_len, "episode length limit")->default_val(128);
  };

  auto* train = app.add_subcommand("train", "train a decoding policy with PPO");
  add_run_options(train);
  train->add_option("--episodes", cfg.episodes, "training episodes")->default_val(500);
  train->add_option("--eval-every", cfg.eval_every, "episodes between checkpoints")->default_val(10);
  train->add_option("--window", cfg.moving_avg_window, "moving average window for the plot")->default_val(10);
  train->add_option("--rigged-target", rigged, "replace the reward by 1 - |mean T - target|");
  train->add_option("--out", out_dir, "output directory")->required();

  std::string checkpoint_path;
  auto* eval = app.add_subcommand("eval", "evaluate a saved policy on the held-out prompts");
  eval->add_option("--checkpoint", checkpoint_path, "policy checkpoint")->required();
  eval->add_option("--dataset", cfg.dataset_path, "dataset the policy was trained on")->required();
  eval->add_option("--reward", reward, "reward variant")->default_val("proposed");

  std::string mode = "greedy";
  double temperature = 0.3;
  auto* baseline = app.add_subcommand("baseline", "score a fixed decoding strategy");
  add_run_options(baseline);
  baseline->add_option("--mode", mode, "greedy or static")->default_val("greedy");
  baseline->add_option("--temperature", temperature, "static temperature")->default_val(0.3);
  baseline->add_option("--out", out_dir, "optional output directory");

  std::string variants = "all";
  auto* ablate_cmd = app.add_subcommand("ablate", "train and compare every reward variant");
  add_run_options(ablate_cmd);
  ablate_cmd->add_option("--variants", variants, "all or a comma-separated list")->default_val("all");
  ablate_cmd->add_option("--episodes", cfg.episodes, "training episodes per variant")->default_val(500);
  ablate_cmd->add_option("--eval-every", cfg.eval_every, "episodes between checkpoints")->default_val(10);
  ablate_cmd->add_option("--out", out_dir, "optional output directory");

  std::string metrics_path;
  std::string plot_out;
  std::size_t window = 10;
  auto* plot = app.add_subcommand("plot", "reward-over-time chart from an episodes CSV");
  plot->add_option("--metrics", metrics_path, "episodes.csv")->required();
  plot->add_option("--window", window, "moving average window")->default_val(10);
  plot->add_option("--out", plot_out, "SVG output (a CSV is written alongside)")->required();

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string corpus_path;
  auto* serve = app.add_subcommand("serve-mock", "serve the step protocol from the built-in n-gram model");
  serve->add_option("--host", host, "bind address")->default_val("127.0.0.1");
  serve->add_option("--port", port, "port, 0 for any")->default_val(8080);
  serve->add_option("--dataset", cfg.dataset_path, "train the model on a JSON-lines dataset");
  serve->add_option("--corpus", corpus_path, "train the model on a text file, one document per line");

  std::size_t n_records = kToyDatasetSize;
  auto* toy = app.add_subcommand("make-toy", "write the bundled toy dataset");
  toy->add_option("--out", out_dir, "output .jsonl")->required();
  toy->add_option("--records", n_records, "number of records")->default_val(kToyDatasetSize);
  toy->add_option("--seed", seed, "generator seed")->default_val(0);

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.seed = seed_from_env(seed);
    cfg.reward_variant = parse_variant(reward);
    cfg.rigged_target = rigged;

    if (*train) {
      TrainResult result = train_run(cfg);
      write_run_outputs(out_dir, result.metrics);
      save_checkpoint(fs::path(out_dir) / "policy.json", {result.policy, cfg.features(), cfg});
      emit_plot(result.metrics.episodes, cfg.moving_avg_window, fs::path(out_dir) / "reward_plot.svg");
      print_run_summary(result.metrics);
    } else if (*eval) {
      CheckpointFile ckpt = load_checkpoint(checkpoint_path);
      RunConfig run = ckpt.run;
      run.dataset_path = cfg.dataset_path;
      const RunContext ctx = RunContext::load(run);
      EpisodeOptions opts;
      opts.max_len = run.ppo.max_episode_len;
      opts.act_every = run.ppo.act_every;
      opts.features = ckpt.features;
      const auto rows = evaluate_policy(ckpt.policy, ctx.eval_records(), *ctx.lm,
                                        RewardConfig::for_variant(cfg.reward_variant), opts, run.seed);
      double sum = 0.0;
      for (const auto& r : rows) {
        std::cout << r.prompt_id << ' ' << r.reward << '\n';
        sum += r.reward;
      }
      std::cout << "eval_avg_reward " << sum / static_cast<double>(rows.size()) << '\n';
    } else if (*baseline) {
      cfg.validate();
      const RunContext ctx = RunContext::load(cfg);
      const RunMetrics m = run_baseline(ctx.eval_records(), parse_baseline_mode(mode),
                                        RewardConfig::for_variant(cfg.reward_variant), *ctx.lm, cfg.seed,
                                        temperature, cfg.ppo.max_episode_len);
      if (!out_dir.empty()) write_run_outputs(out_dir, m);
      std::cout << "eval_avg_reward " << m.final_avg_reward() << '\n';
    } else if (*ablate_cmd) {
      const auto rows = ablate(cfg, parse_variant_list(variants), out_dir);
      const std::string table = format_comparison_table(rows);
      std::cout << table;
      if (!out_dir.empty()) {
        std::ofstream(fs::path(out_dir) / "ablation.txt") << table;
      }
    } else if (*plot) {
      emit_plot(read_episodes_csv(metrics_path), window, plot_out);
    } else if (*serve) {
      std::vector<std::vector<std::string>> corpus;
      if (!corpus_path.empty()) {
        corpus = read_text_corpus(corpus_path);
      } else {
        const auto records = cfg.dataset_path.empty() ? make_toy_dataset(kToyDatasetSize, 0) : load_dataset(cfg.dataset_path);
        corpus = lm_training_corpus(records, {});
      }
      auto lm = std::make_shared<NGramLM>(build_ngram_lm(corpus));
      MockStepServer server(lm);
      std::cout << "serving on http://" << host << ':' << port << "/step" << std::endl;
      server.serve_blocking(host, port);
    } else if (*toy) {
      write_dataset(out_dir, make_toy_dataset(n_records, seed));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
