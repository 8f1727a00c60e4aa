#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rldecode/dataset.hpp"
#include "rldecode/features.hpp"
#include "rldecode/lm_core.hpp"
#include "rldecode/policy.hpp"
#include "rldecode/rewards.hpp"
#include "rldecode/rl.hpp"

namespace rldecode {

/// Separates the document from the continuation in prompts and LM training
/// sequences.
inline constexpr std::string_view kSummaryMarker = "tldr";

/// Returned where a percentage is undefined (zero base).
inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

enum class BaselineMode { none, greedy, static_ };

std::string_view to_string(BaselineMode mode);
/// Throws ConfigError for anything but "greedy" or "static".
BaselineMode parse_baseline_mode(std::string_view name);

struct RunConfig {
  std::string dataset_path;
  std::size_t n_prompts = 100;
  std::size_t eval_prompts = 20;
  RewardVariant reward_variant = RewardVariant::proposed;
  BaselineMode baseline_mode = BaselineMode::none;
  double static_temperature = 0.3;
  std::size_t episodes = 500;
  std::size_t eval_every = 10;
  std::uint64_t seed = 0;
  PPOConfig ppo;
  std::size_t moving_avg_window = 10;
  NGramOptions lm;
  std::size_t feature_k = 50;
  /// When set, the reward ignores the text and becomes
  /// 1 - |mean episode temperature - target|.
  std::optional<double> rigged_target;

  /// Throws ConfigError for inconsistent settings.
  void validate() const;
  FeatureConfig features() const;
};

/// Applies RLDECODE_SEED when set. Throws ConfigError when it is not an
/// unsigned integer.
std::uint64_t seed_from_env(std::uint64_t fallback);

/// Disjoint train and eval prompt indices into the record list.
struct PromptSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};

/// Eval prompts are drawn first; train prompts come from the remainder.
/// Throws ConfigError when the dataset cannot hold at least one train prompt.
PromptSplit split_prompts(std::size_t n_records, std::size_t n_train, std::size_t n_eval, std::uint64_t seed);

/// "source tldr reference" sequences for every non-eval record.
std::vector<std::vector<std::string>> lm_training_corpus(const std::vector<DatasetRecord>& records,
                                                         const PromptSplit& split);

std::vector<TokenId> prompt_ids(const DatasetRecord& record, const Vocab& vocab);

struct EpisodeRow {
  std::size_t episode = 0;  // 1-based
  std::string prompt_id;
  double reward = 0.0;
  double mean_t = 0.0;
  double mean_p = 0.0;
  std::size_t tokens = 0;
  TerminalReason terminal = TerminalReason::eos;
};

struct CheckpointRow {
  std::size_t episode = 0;  // episodes completed
  double eval_avg_reward = 0.0;
  double eval_mean_t = 0.0;
};

struct EvalRow {
  std::size_t episode = 0;
  std::string prompt_id;
  double reward = 0.0;
  double mean_t = 0.0;
};

struct RunMetrics {
  RewardVariant variant = RewardVariant::proposed;
  std::string label;  // "ppo", "greedy" or "static"
  std::vector<EpisodeRow> episodes;
  std::vector<CheckpointRow> checkpoints;
  std::vector<EvalRow> eval_log;
  std::vector<std::string> train_prompt_ids;
  std::vector<std::string> eval_prompt_ids;

  double final_avg_reward() const;
};

/// Text-scored reward for a record, or the rigged temperature reward.
RewardFn make_reward_fn(const DatasetRecord& record, const RewardConfig& cfg,
                        std::optional<double> rigged_target = std::nullopt);

/// Decodes every record once with a fixed strategy and scores it.
RunMetrics run_baseline(const std::vector<DatasetRecord>& records, BaselineMode mode,
                        const RewardConfig& reward_cfg, const LanguageModel& lm, std::uint64_t seed,
                        double static_temperature = 0.3, std::size_t max_len = 128,
                        std::optional<double> rigged_target = std::nullopt);

/// Zero-noise evaluation: actions are the squashed policy mean and each
/// record's token stream is seeded from (seed, record position), so repeated
/// evaluations agree exactly.
std::vector<EvalRow> evaluate_policy(const Policy& policy, const std::vector<DatasetRecord>& records,
                                     const LanguageModel& lm, const RewardConfig& reward_cfg,
                                     const EpisodeOptions& options, std::uint64_t seed,
                                     std::optional<double> rigged_target = std::nullopt);

struct TrainResult {
  RunMetrics metrics;
  Policy policy;
  std::vector<std::vector<UpdateStats>> updates;
};

/// Everything a run needs once the dataset has been read.
struct RunContext {
  std::vector<DatasetRecord> records;
  PromptSplit split;
  std::shared_ptr<NGramLM> lm;

  static RunContext load(const RunConfig& cfg);
  static RunContext from_records(std::vector<DatasetRecord> records, const RunConfig& cfg);
  std::vector<DatasetRecord> eval_records() const;
};

/// PPO training with checkpoint evaluations at episode 0, every eval_every
/// episodes and at the end.
TrainResult train_run(const RunConfig& cfg, const RunContext& ctx);
TrainResult train_run(const RunConfig& cfg);

/// Relative change between the first and last checkpoint, in percent.
/// kUndefined when the first is zero; throws InputError with fewer than two
/// checkpoints.
double early_late_change(const RunMetrics& metrics);

struct ComparisonRow {
  RewardVariant variant = RewardVariant::proposed;
  double ppo = 0.0;
  double greedy = 0.0;
  double static_ = 0.0;
  double delta_greedy = 0.0;  // percent
  double delta_static = 0.0;  // percent
  double early_late = 0.0;    // percent
};

/// 100 * (rl - base) / base, kUndefined for a zero base.
double percent_delta(double rl, double base);

/// Throws ComparisonError when the runs were scored with different variants.
ComparisonRow compare(const RunMetrics& policy, const RunMetrics& greedy, const RunMetrics& static_run);

/// "+17.12", "-0.59", or "n/a" for kUndefined.
std::string format_percent(double value);

/// Table with one row per variant: PPO, greedy, static, both deltas and
/// early-to-late change.
std::string format_comparison_table(const std::vector<ComparisonRow>& rows);

/// Trains and runs both baselines for each variant.
std::vector<ComparisonRow> ablate(const RunConfig& base, const std::vector<RewardVariant>& variants,
                                  const std::filesystem::path& out_dir = {});

// ---------------------------------------------------------------------------
// Persistence

void write_episodes_csv(const std::filesystem::path& path, const RunMetrics& metrics);
void write_checkpoints_csv(const std::filesystem::path& path, const RunMetrics& metrics);
void write_eval_log_csv(const std::filesystem::path& path, const RunMetrics& metrics);
std::vector<EpisodeRow> read_episodes_csv(const std::filesystem::path& path);
/// Writes episodes.csv, checkpoints.csv, eval_log.csv and summary.json.
void write_run_outputs(const std::filesystem::path& dir, const RunMetrics& metrics);

struct CheckpointFile {
  Policy policy;
  FeatureConfig features;
  RunConfig run;
};

/// Versioned JSON container: dims, every tensor in declared order, the
/// feature config and the run settings needed to rebuild the environment.
void save_checkpoint(const std::filesystem::path& path, const CheckpointFile& ckpt);
/// Throws ConfigError on a version or dimension mismatch.
CheckpointFile load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Plots

/// Trailing mean over `window` values; early entries average what exists.
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);
void write_plot_csv(const std::filesystem::path& path, const std::vector<EpisodeRow>& rows, std::size_t window);
std::string render_svg(const std::vector<EpisodeRow>& rows, std::size_t window);
/// Writes `svg_path` and a CSV next to it (same stem, .csv).
void emit_plot(const std::vector<EpisodeRow>& rows, std::size_t window, const std::filesystem::path& svg_path);

}  // namespace rldecode
