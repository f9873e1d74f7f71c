#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attnes/attention.hpp"
#include "attnes/cmaes.hpp"
#include "attnes/controller.hpp"
#include "attnes/envs.hpp"
#include "attnes/genome.hpp"

namespace attnes {

/// Decoded genome plus recurrent state: frame in, action out.
class Agent {
 public:
  Agent(const AgentConfig& config, std::span<const double> genome);

  struct Decision {
    Action action;
    AttentionOutcome perception;
    Frame input;  // the L x L frame the agent looked at
  };

  void reset();
  Decision act(const Frame& observation);

  const AgentConfig& config() const { return config_; }
  const PatchGrid& grid() const { return grid_; }
  const DecodedGenome& params() const { return params_; }
  const ControllerState& state() const { return state_; }

 private:
  AgentConfig config_;
  PatchGrid grid_;
  DecodedGenome params_;
  ControllerState state_;
};

struct StepRecord {
  std::vector<int> selected;
  std::vector<double> importance;  // all N patches
  Action action;
  double reward = 0.0;
  bool done = false;
};

struct EpisodeTrace {
  std::vector<StepRecord> steps;
  std::vector<Frame> inputs;  // per step, only when frames are kept
  double score = 0.0;
  bool aborted = false;
};

struct TraceOptions {
  bool record = false;
  bool keep_frames = false;
};

struct RolloutResult {
  double score = 0.0;
  int steps = 0;
  bool aborted = false;  // non-finite numbers; score is the environment minimum
  std::optional<EpisodeTrace> trace;
};

/// One episode: resize, patchify, vote, select, centres, LSTM, env.step until done or
/// `max_steps` (0 = environment limit). Controller state starts at zero.
RolloutResult rollout_episode(std::span<const double> genome, const AgentConfig& config,
                              Environment& env, std::uint64_t seed, TraceOptions trace = {},
                              int max_steps = 0);

struct RolloutPlan {
  EnvFactory factory;
  int rollouts = 16;  // R
  int max_steps = 0;
  std::uint64_t run_seed = 0;
};

/// Mean score over R rollouts seeded by (run seed, train, generation, individual, r).
/// A rollout lost to a SessionError makes the fitness NaN.
double evaluate_fitness(std::span<const double> genome, const AgentConfig& config,
                        const RolloutPlan& plan, std::uint64_t generation, std::uint64_t individual);

/// Fitness of every candidate; lambda * R jobs spread over `workers` threads. The result does
/// not depend on the worker count or completion order.
std::vector<double> evaluate_population(std::span<const std::vector<double>> candidates,
                                        const AgentConfig& config, const RolloutPlan& plan,
                                        std::uint64_t generation, int workers);

/// Scores of `episodes` evaluation rollouts (eval seed domain, episode index e).
ScoreSummary evaluate_episodes(std::span<const double> genome, const AgentConfig& config,
                               const EnvFactory& factory, int episodes, std::uint64_t seed,
                               int workers, int max_steps = 0);

struct TrainRun {
  AgentConfig agent;
  CmaConfig optimizer;
  RolloutPlan plan;
  int generations = 1000;
  int eval_every = 10;
  int eval_episodes = 100;
  int workers = 1;
  std::string out_dir;
  bool resume = false;
  /// Stop after the first evaluation whose mean reaches this score.
  std::optional<double> target_eval_score;
};

struct GenerationReport {
  std::uint64_t generation = 0;
  double best = 0.0;
  double mean = 0.0;
  double best_ever = 0.0;
  double sigma = 0.0;
  std::size_t nan_count = 0;
  std::optional<ScoreSummary> eval;
};

struct TrainResult {
  std::uint64_t generations = 0;
  GenomeCheckpoint policy;  // distribution mean; fitness = latest eval mean (NaN before any)
  std::optional<ScoreSummary> last_eval;
  std::vector<GenerationReport> reports;  // generations run in this call
};

/// ask -> evaluate_population -> tell, with periodic evaluation of the distribution mean.
/// Files in out_dir: metrics.jsonl (one "train" record per generation and an "eval" record
/// every eval_every generations) and checkpoint.bin (written atomically each generation).
/// With resume, continues from checkpoint.bin and refuses a different genome layout.
TrainResult train(const TrainRun& run,
                  const std::function<void(const GenerationReport&)>& progress = {});

inline constexpr const char* kMetricsFile = "metrics.jsonl";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";

struct RunCheckpoint {
  GenomeCheckpoint policy;  // first in the file, so genome readers accept run checkpoints
  std::uint64_t generation = 0;
  std::uint64_t run_seed = 0;
  CmaEs optimizer;
};

void save_run_checkpoint(const std::string& path, const RunCheckpoint& ckpt);
RunCheckpoint load_run_checkpoint(const std::string& path);

struct SuiteRow {
  std::string condition;  // "original" or a modification name
  bool ok = true;
  std::string error;  // set when the modification does not apply to the environment
  ScoreSummary summary;
};

/// Unmodified environment first, then one row per modification, all on the same seeds.
std::vector<SuiteRow> generalization_suite(std::span<const double> genome, const AgentConfig& config,
                                           const EnvFactory& base,
                                           std::span<const EnvModification> mods, int episodes,
                                           std::uint64_t seed, int workers);

/// Tab-separated: condition, mean, std, episodes, note.
std::string format_suite(std::span<const SuiteRow> rows);

struct AnalysisOptions {
  double quantile = 0.95;  // histogram keeps values at or above this quantile
  int bins = 20;
  /// Importance ranges to sample exemplar patches from; empty = split the kept range in four.
  std::vector<std::pair<double, double>> ranges;
  int samples_per_range = 8;
  std::uint64_t seed = 0;
};

struct PatchExemplar {
  std::size_t trace = 0;
  std::size_t step = 0;
  int patch = 0;
  double importance = 0.0;
  Image pixels;  // M x M
};

struct AnalysisReport {
  double threshold = 0.0;
  std::vector<double> edges;  // bins + 1 edges
  std::vector<std::size_t> counts;
  std::vector<std::pair<double, double>> ranges;
  std::vector<std::vector<PatchExemplar>> exemplars;  // one list per range
};

/// Throws ConfigError when there is no step to analyse or frames were not kept.
AnalysisReport importance_analysis(std::span<const EpisodeTrace> traces, const PatchGrid& grid,
                                   const AnalysisOptions& options = {});

/// White boxes over the selected windows; opacity max_opacity * (share of selected patches
/// with importance <= this one), so equal importances give equal opacity.
Image attention_overlay(const Frame& input, const PatchGrid& grid, std::span<const int> selected,
                        std::span<const double> importance, double max_opacity = 0.6);

}  // namespace attnes
