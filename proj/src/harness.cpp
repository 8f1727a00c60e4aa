#include "rldecode/harness.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "rldecode/errors.hpp"
#include "rldecode/sampling.hpp"

namespace rldecode {

using nlohmann::json;

namespace {

// Stream indices for derive_seed; each consumer of randomness owns one.
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kPolicyInitStream = 2;
constexpr std::uint64_t kShuffleStream = 3;
constexpr std::uint64_t kPromptStream = 4;
constexpr std::uint64_t kEvalStream = 5;
constexpr std::uint64_t kEpisodeStream = 1000;

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string_view to_string(BaselineMode mode) {
  switch (mode) {
    case BaselineMode::greedy:
      return "greedy";
    case BaselineMode::static_:
      return "static";
    case BaselineMode::none:
      break;
  }
  return "none";
}

BaselineMode parse_baseline_mode(std::string_view name) {
  if (name == "greedy") return BaselineMode::greedy;
  if (name == "static") return BaselineMode::static_;
  throw ConfigError("baseline mode must be greedy or static, got " + std::string(name));
}

void RunConfig::validate() const {
  ppo.validate();
  if (n_prompts < 1) throw ConfigError("n_prompts must be >= 1");
  if (eval_prompts < 1) throw ConfigError("eval_prompts must be >= 1");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (moving_avg_window < 1) throw ConfigError("moving_avg_window must be >= 1");
  features().validate();
}

FeatureConfig RunConfig::features() const {
  return {feature_k, lm.hidden_dim, ppo.max_episode_len};
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* env = std::getenv("RLDECODE_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || end == env || *end != '\0' || env[0] == '-') {
    throw ConfigError("RLDECODE_SEED must be an unsigned integer, got \"" + std::string(env) + "\"");
  }
  return v;
}

PromptSplit split_prompts(std::size_t n_records, std::size_t n_train, std::size_t n_eval, std::uint64_t seed) {
  if (n_records < n_eval + 1) {
    throw ConfigError("dataset has " + std::to_string(n_records) + " records; need more than " +
                      std::to_string(n_eval) + " for disjoint train and eval prompts");
  }
  std::vector<std::size_t> order(n_records);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kSplitStream));
  shuffle(order, rng);
  PromptSplit split;
  split.eval.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
  const std::size_t train_end = std::min(n_records, n_eval + n_train);
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_eval),
                     order.begin() + static_cast<std::ptrdiff_t>(train_end));
  return split;
}

std::vector<std::vector<std::string>> lm_training_corpus(const std::vector<DatasetRecord>& records,
                                                         const PromptSplit& split) {
  std::vector<bool> held_out(records.size(), false);
  for (std::size_t i : split.eval) held_out[i] = true;
  std::vector<std::vector<std::string>> corpus;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (held_out[i]) continue;
    auto seq = tokenize(records[i].source);
    seq.emplace_back(kSummaryMarker);
    for (auto& t : tokenize(records[i].reference)) seq.push_back(std::move(t));
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

std::vector<TokenId> prompt_ids(const DatasetRecord& record, const Vocab& vocab) {
  auto toks = tokenize(record.source);
  toks.emplace_back(kSummaryMarker);
  return vocab.encode(toks);
}

double RunMetrics::final_avg_reward() const {
  if (!checkpoints.empty()) return checkpoints.back().eval_avg_reward;
  if (episodes.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : episodes) s += r.reward;
  return s / static_cast<double>(episodes.size());
}

RewardFn make_reward_fn(const DatasetRecord& record, const RewardConfig& cfg, std::optional<double> rigged_target) {
  if (rigged_target) {
    const double target = *rigged_target;
    return [target](const EpisodeOutcome& o) { return 1.0 - std::abs(o.mean_temperature - target); };
  }
  return [&record, cfg](const EpisodeOutcome& o) {
    return composite_reward(o.text, record.reference, record.source, cfg).normalized;
  };
}

// ---------------------------------------------------------------------------
// Baselines and evaluation

RunMetrics run_baseline(const std::vector<DatasetRecord>& records, BaselineMode mode,
                        const RewardConfig& reward_cfg, const LanguageModel& lm, std::uint64_t seed,
                        double static_temperature, std::size_t max_len, std::optional<double> rigged_target) {
  if (mode == BaselineMode::none) throw ConfigError("baseline mode must be greedy or static");
  const SamplerSettings settings = mode == BaselineMode::greedy
                                       ? SamplerSettings::greedy()
                                       : SamplerSettings(static_temperature, 1.0, SamplerMode::static_);
  const Vocab& vocab = lm.vocab();
  RunMetrics metrics;
  metrics.variant = reward_cfg.variant;
  metrics.label = std::string(to_string(mode));
  double total = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const DatasetRecord& rec = records[i];
    Rng rng(derive_seed(derive_seed(seed, kEvalStream), i));
    std::vector<TokenId> prefix = prompt_ids(rec, vocab);
    std::vector<std::string> tokens;
    TerminalReason reason = TerminalReason::length_limit;
    for (std::size_t step = 0; step < max_len; ++step) {
      const StepOutput out = lm.next_logits(prefix);
      const TokenId next = decode_step(out.logits, settings, rng);
      if (next == vocab.eos()) {
        reason = TerminalReason::eos;
        break;
      }
      prefix.push_back(next);
      tokens.push_back(vocab.token_of(next));
    }
    const std::string text = detokenize(tokens);
    const double mean_t = mode == BaselineMode::greedy ? 0.0 : static_temperature;
    const double mean_p = 1.0;
    const double reward = make_reward_fn(rec, reward_cfg, rigged_target)(EpisodeOutcome{tokens, text, mean_t, mean_p});
    metrics.episodes.push_back({i + 1, rec.id, reward, mean_t, mean_p, tokens.size(), reason});
    metrics.eval_log.push_back({0, rec.id, reward, mean_t});
    metrics.eval_prompt_ids.push_back(rec.id);
    total += reward;
  }
  metrics.checkpoints.push_back({0, records.empty() ? 0.0 : total / static_cast<double>(records.size()),
                                 mode == BaselineMode::greedy ? 0.0 : static_temperature});
  return metrics;
}

std::vector<EvalRow> evaluate_policy(const Policy& policy, const std::vector<DatasetRecord>& records,
                                     const LanguageModel& lm, const RewardConfig& reward_cfg,
                                     const EpisodeOptions& options, std::uint64_t seed,
                                     std::optional<double> rigged_target) {
  EpisodeOptions eval_opts = options;
  eval_opts.deterministic = true;
  std::vector<EvalRow> rows;
  rows.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    Rng rng(derive_seed(derive_seed(seed, kEvalStream), i));
    const auto prompt = prompt_ids(records[i], lm.vocab());
    const Trajectory traj = run_episode(lm, policy, make_reward_fn(records[i], reward_cfg, rigged_target),
                                        prompt, rng, eval_opts);
    rows.push_back({0, records[i].id, traj.composite_reward, traj.mean_temperature});
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Training

RunContext RunContext::from_records(std::vector<DatasetRecord> records, const RunConfig& cfg) {
  RunContext ctx;
  ctx.records = std::move(records);
  ctx.split = split_prompts(ctx.records.size(), cfg.n_prompts, cfg.eval_prompts, cfg.seed);
  ctx.lm = std::make_shared<NGramLM>(build_ngram_lm(lm_training_corpus(ctx.records, ctx.split), cfg.lm));
  return ctx;
}

RunContext RunContext::load(const RunConfig& cfg) {
  return from_records(load_dataset(cfg.dataset_path), cfg);
}

std::vector<DatasetRecord> RunContext::eval_records() const {
  std::vector<DatasetRecord> out;
  for (std::size_t i : split.eval) out.push_back(records[i]);
  return out;
}

TrainResult train_run(const RunConfig& cfg) {
  cfg.validate();
  return train_run(cfg, RunContext::load(cfg));
}

TrainResult train_run(const RunConfig& cfg, const RunContext& ctx) {
  cfg.validate();
  const RewardConfig reward_cfg = RewardConfig::for_variant(cfg.reward_variant);
  const NGramLM& lm = *ctx.lm;
  const FeatureConfig features = cfg.features();
  const std::vector<DatasetRecord> eval_records = ctx.eval_records();

  EpisodeOptions opts;
  opts.max_len = cfg.ppo.max_episode_len;
  opts.act_every = cfg.ppo.act_every;
  opts.features = features;

  Rng init_rng(derive_seed(cfg.seed, kPolicyInitStream));
  const PolicyDims dims{static_cast<Eigen::Index>(features.state_len()), 64, 256};
  TrainerState trainer(Policy::random(dims, init_rng), cfg.ppo, derive_seed(cfg.seed, kShuffleStream));

  TrainResult result;
  RunMetrics& m = result.metrics;
  m.variant = cfg.reward_variant;
  m.label = "ppo";
  for (std::size_t i : ctx.split.train) m.train_prompt_ids.push_back(ctx.records[i].id);
  for (const auto& r : eval_records) m.eval_prompt_ids.push_back(r.id);

  auto checkpoint = [&](std::size_t episode) {
    auto rows = evaluate_policy(trainer.policy, eval_records, lm, reward_cfg, opts, cfg.seed, cfg.rigged_target);
    double sum_r = 0.0;
    double sum_t = 0.0;
    for (auto& row : rows) {
      row.episode = episode;
      sum_r += row.reward;
      sum_t += row.mean_t;
      m.eval_log.push_back(row);
    }
    const auto n = static_cast<double>(rows.size());
    m.checkpoints.push_back({episode, sum_r / n, sum_t / n});
  };

  checkpoint(0);
  Rng prompt_rng(derive_seed(cfg.seed, kPromptStream));
  std::vector<Trajectory> buffer;
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    const std::size_t rec_index = ctx.split.train[prompt_rng.below(ctx.split.train.size())];
    const DatasetRecord& rec = ctx.records[rec_index];
    Rng ep_rng(derive_seed(cfg.seed, kEpisodeStream + e));
    const auto prompt = prompt_ids(rec, lm.vocab());
    Trajectory traj = run_episode(lm, trainer.policy, make_reward_fn(rec, reward_cfg, cfg.rigged_target),
                                  prompt, ep_rng, opts);
    m.episodes.push_back({e + 1, rec.id, traj.composite_reward, traj.mean_temperature, traj.mean_top_p,
                          traj.tokens.size(), traj.terminal_reason});
    buffer.push_back(std::move(traj));

    const bool last = e + 1 == cfg.episodes;
    if (buffer.size() == static_cast<std::size_t>(cfg.ppo.episodes_per_update) || last) {
      result.updates.push_back(ppo_update(trainer, buffer, cfg.ppo));
      buffer.clear();
    }
    if ((e + 1) % cfg.eval_every == 0 || last) checkpoint(e + 1);
  }
  result.policy = trainer.policy;
  return result;
}

// ---------------------------------------------------------------------------
// Reporting

double early_late_change(const RunMetrics& metrics) {
  if (metrics.checkpoints.size() < 2) throw InputError("early-to-late change needs at least two checkpoints");
  const double first = metrics.checkpoints.front().eval_avg_reward;
  const double last = metrics.checkpoints.back().eval_avg_reward;
  return percent_delta(last, first);
}

double percent_delta(double rl, double base) {
  if (base == 0.0) return kUndefined;
  return 100.0 * (rl - base) / base;
}

ComparisonRow compare(const RunMetrics& policy, const RunMetrics& greedy, const RunMetrics& static_run) {
  if (policy.variant != greedy.variant || policy.variant != static_run.variant) {
    throw ComparisonError("runs were scored with different reward variants");
  }
  ComparisonRow row;
  row.variant = policy.variant;
  row.ppo = policy.final_avg_reward();
  row.greedy = greedy.final_avg_reward();
  row.static_ = static_run.final_avg_reward();
  row.delta_greedy = percent_delta(row.ppo, row.greedy);
  row.delta_static = percent_delta(row.ppo, row.static_);
  row.early_late = policy.checkpoints.size() >= 2 ? early_late_change(policy) : kUndefined;
  return row;
}

std::string format_percent(double value) {
  if (std::isnan(value)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%+.2f", value);
  return buf;
}

std::string format_comparison_table(const std::vector<ComparisonRow>& rows) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-18s %7s %7s %7s %14s %14s %12s\n", "reward_variant", "ppo", "greedy",
                "static", "delta_greedy%", "delta_static%", "early_late%");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-18s %7.3f %7.3f %7.3f %14s %14s %12s\n",
                  std::string(variant_name(r.variant)).c_str(), r.ppo, r.greedy, r.static_,
                  format_percent(r.delta_greedy).c_str(), format_percent(r.delta_static).c_str(),
                  format_percent(r.early_late).c_str());
    out << line;
  }
  return out.str();
}

std::vector<ComparisonRow> ablate(const RunConfig& base, const std::vector<RewardVariant>& variants,
                                  const std::filesystem::path& out_dir) {
  base.validate();
  const RunContext ctx = RunContext::load(base);
  const auto eval_records = ctx.eval_records();
  std::vector<ComparisonRow> rows;
  for (RewardVariant v : variants) {
    RunConfig cfg = base;
    cfg.reward_variant = v;
    const RewardConfig reward_cfg = RewardConfig::for_variant(v);
    TrainResult trained = train_run(cfg, ctx);
    const RunMetrics greedy = run_baseline(eval_records, BaselineMode::greedy, reward_cfg, *ctx.lm, cfg.seed,
                                           cfg.static_temperature, cfg.ppo.max_episode_len);
    const RunMetrics stat = run_baseline(eval_records, BaselineMode::static_, reward_cfg, *ctx.lm, cfg.seed,
                                         cfg.static_temperature, cfg.ppo.max_episode_len);
    rows.push_back(compare(trained.metrics, greedy, stat));
    if (!out_dir.empty()) {
      const auto dir = out_dir / std::string(variant_name(v));
      write_run_outputs(dir, trained.metrics);
      save_checkpoint(dir / "policy.json", {trained.policy, cfg.features(), cfg});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Persistence

void write_episodes_csv(const std::filesystem::path& path, const RunMetrics& metrics) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "episode,prompt_id,reward,mean_T,mean_p,tokens,terminal\n";
  for (const auto& r : metrics.episodes) {
    out << r.episode << ',' << r.prompt_id << ',' << fmt_num(r.reward) << ',' << fmt_num(r.mean_t) << ','
        << fmt_num(r.mean_p) << ',' << r.tokens << ',' << to_string(r.terminal) << '\n';
  }
}

void write_checkpoints_csv(const std::filesystem::path& path, const RunMetrics& metrics) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "episode,eval_avg_reward\n";
  for (const auto& c : metrics.checkpoints) out << c.episode << ',' << fmt_num(c.eval_avg_reward) << '\n';
}

void write_eval_log_csv(const std::filesystem::path& path, const RunMetrics& metrics) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "episode,prompt_id,reward,mean_T\n";
  for (const auto& r : metrics.eval_log) {
    out << r.episode << ',' << r.prompt_id << ',' << fmt_num(r.reward) << ',' << fmt_num(r.mean_t) << '\n';
  }
}

std::vector<EpisodeRow> read_episodes_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("episode,prompt_id,reward", 0) != 0) {
    throw InputError(path.string() + ": missing episodes header");
  }
  std::vector<EpisodeRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 7) throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected 7 columns");
    try {
      EpisodeRow r;
      r.episode = std::stoul(cells[0]);
      r.prompt_id = cells[1];
      r.reward = std::stod(cells[2]);
      r.mean_t = std::stod(cells[3]);
      r.mean_p = std::stod(cells[4]);
      r.tokens = std::stoul(cells[5]);
      r.terminal = cells[6] == "eos" ? TerminalReason::eos : TerminalReason::length_limit;
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": malformed number");
    }
  }
  return rows;
}

void write_run_outputs(const std::filesystem::path& dir, const RunMetrics& metrics) {
  std::filesystem::create_directories(dir);
  write_episodes_csv(dir / "episodes.csv", metrics);
  write_checkpoints_csv(dir / "checkpoints.csv", metrics);
  write_eval_log_csv(dir / "eval_log.csv", metrics);

  json summary;
  summary["label"] = metrics.label;
  summary["reward_variant"] = std::string(variant_name(metrics.variant));
  summary["episodes"] = metrics.episodes.size();
  summary["final_avg_reward"] = metrics.final_avg_reward();
  const double el = metrics.checkpoints.size() >= 2 ? early_late_change(metrics) : kUndefined;
  summary["early_late_percent"] = std::isnan(el) ? json(nullptr) : json(el);
  summary["train_prompt_ids"] = metrics.train_prompt_ids;
  summary["eval_prompt_ids"] = metrics.eval_prompt_ids;
  std::ofstream out(dir / "summary.json");
  out << summary.dump(2) << '\n';
}

namespace {

constexpr int kCheckpointVersion = 1;

json run_to_json(const RunConfig& c) {
  return json{{"seed", c.seed},
              {"n_prompts", c.n_prompts},
              {"eval_prompts", c.eval_prompts},
              {"reward_variant", std::string(variant_name(c.reward_variant))},
              {"episodes", c.episodes},
              {"eval_every", c.eval_every},
              {"lm_order", c.lm.order},
              {"lm_smoothing_k", c.lm.smoothing_k},
              {"lm_hidden_dim", c.lm.hidden_dim},
              {"lm_projection_seed", c.lm.projection_seed},
              {"max_episode_len", c.ppo.max_episode_len},
              {"act_every", c.ppo.act_every}};
}

RunConfig run_from_json(const json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_prompts = j.at("n_prompts").get<std::size_t>();
  c.eval_prompts = j.at("eval_prompts").get<std::size_t>();
  c.reward_variant = parse_variant(j.at("reward_variant").get<std::string>());
  c.episodes = j.at("episodes").get<std::size_t>();
  c.eval_every = j.at("eval_every").get<std::size_t>();
  c.lm.order = j.at("lm_order").get<int>();
  c.lm.smoothing_k = j.at("lm_smoothing_k").get<double>();
  c.lm.hidden_dim = j.at("lm_hidden_dim").get<std::size_t>();
  c.lm.projection_seed = j.at("lm_projection_seed").get<std::uint64_t>();
  c.ppo.max_episode_len = j.at("max_episode_len").get<std::size_t>();
  c.ppo.act_every = j.at("act_every").get<std::size_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const CheckpointFile& ckpt) {
  const PolicyDims d = ckpt.policy.dims();
  json doc;
  doc["format"] = "rldecode-policy";
  doc["version"] = kCheckpointVersion;
  doc["dims"] = {{"state_len", d.state_len}, {"input_dim", d.input_dim}, {"hidden", d.hidden}};
  doc["features"] = {{"k", ckpt.features.k},
                     {"hidden_dim", ckpt.features.hidden_dim},
                     {"max_prefix_len", ckpt.features.max_prefix_len}};
  doc["run"] = run_to_json(ckpt.run);
  json tensors = json::array();
  ckpt.policy.params().visit([&](std::string_view name, const auto& t) {
    std::vector<double> values(t.data(), t.data() + t.size());
    tensors.push_back({{"name", std::string(name)}, {"rows", t.rows()}, {"cols", t.cols()}, {"values", values}});
  });
  doc["tensors"] = std::move(tensors);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out << doc.dump() << '\n';
}

CheckpointFile load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + " is not valid JSON");
  }
  try {
    if (doc.at("format") != "rldecode-policy" || doc.at("version") != kCheckpointVersion) {
      throw ConfigError("unsupported checkpoint format or version");
    }
    const json& jd = doc.at("dims");
    const PolicyDims dims{jd.at("state_len").get<Eigen::Index>(), jd.at("input_dim").get<Eigen::Index>(),
                          jd.at("hidden").get<Eigen::Index>()};
    CheckpointFile ckpt;
    const json& jf = doc.at("features");
    ckpt.features = {jf.at("k").get<std::size_t>(), jf.at("hidden_dim").get<std::size_t>(),
                     jf.at("max_prefix_len").get<std::size_t>()};
    if (static_cast<Eigen::Index>(ckpt.features.state_len()) != dims.state_len) {
      throw ConfigError("checkpoint feature config does not match policy state length");
    }
    ckpt.run = run_from_json(doc.at("run"));

    auto params = PolicyParams<double>::zeros(dims);
    const json& tensors = doc.at("tensors");
    std::size_t k = 0;
    params.visit([&](std::string_view name, auto& t) {
      if (k >= tensors.size()) throw ConfigError("checkpoint is missing tensor " + std::string(name));
      const json& jt = tensors[k++];
      if (jt.at("name").get<std::string>() != name || jt.at("rows").get<Eigen::Index>() != t.rows() ||
          jt.at("cols").get<Eigen::Index>() != t.cols()) {
        throw ConfigError("checkpoint tensor " + std::string(name) + " has unexpected name or shape");
      }
      const auto values = jt.at("values").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(values.size()) != t.size()) {
        throw ConfigError("checkpoint tensor " + std::string(name) + " has the wrong length");
      }
      std::copy(values.begin(), values.end(), t.data());
    });
    if (k != tensors.size()) throw ConfigError("checkpoint has unexpected extra tensors");
    ckpt.policy = Policy(std::move(params));
    return ckpt;
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint " + path.string() + " is malformed: " + e.what());
  }
}

}  // namespace rldecode
