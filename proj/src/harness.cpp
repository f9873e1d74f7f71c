#include "attnes/harness.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>

#include <omp.h>

#include <json.hpp>

#include "attnes/binary_io.hpp"
#include "attnes/seeding.hpp"

namespace attnes {

namespace fs = std::filesystem;

namespace {

constexpr char kRunMagic[] = "ATNSRUN\x01";
constexpr std::uint32_t kRunFormatVersion = 1;

// Runs body(i) for i in [0, n) on `workers` threads; rethrows the first exception.
template <class Body>
void parallel_jobs(std::size_t n, int workers, Body&& body) {
  std::exception_ptr failure;
  std::mutex failure_mutex;
#pragma omp parallel for schedule(dynamic, 1) num_threads(std::max(1, workers))
  for (std::size_t i = 0; i < n; ++i) {
    try {
      body(i, static_cast<std::size_t>(omp_get_thread_num()));
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

// Per-thread environment instances, created on first use.
class EnvPool {
 public:
  EnvPool(const EnvFactory& factory, int workers)
      : factory_(factory), envs_(static_cast<std::size_t>(std::max(1, workers))) {}

  Environment& get(std::size_t thread) {
    if (!envs_[thread]) envs_[thread] = factory_();
    return *envs_[thread];
  }
  void drop(std::size_t thread) { envs_[thread].reset(); }

 private:
  const EnvFactory& factory_;
  std::vector<std::unique_ptr<Environment>> envs_;
};

double mean_finite(std::span<const double> v, std::size_t* nan_count) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    sum += x;
    ++n;
  }
  if (nan_count) *nan_count = v.size() - n;
  return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

void append_metrics(const fs::path& path, const GenerationReport& r) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw ConfigError("cannot append to " + path.string());
  nlohmann::ordered_json row;
  row["type"] = "train";
  row["generation"] = r.generation;
  row["best"] = number_or_null(r.best);
  row["mean"] = number_or_null(r.mean);
  row["best_ever"] = number_or_null(r.best_ever);
  row["sigma"] = r.sigma;
  row["nan"] = r.nan_count;
  f << row.dump() << "\n";
  if (r.eval) {
    nlohmann::ordered_json ev;
    ev["type"] = "eval";
    ev["generation"] = r.generation;
    ev["eval_mean"] = r.eval->mean;
    ev["eval_std"] = r.eval->std;
    ev["episodes"] = r.eval->scores.size();
    f << ev.dump() << "\n";
  }
}

// Keeps metric rows up to and including `generation` (crash between checkpoint and log).
void truncate_metrics(const fs::path& path, std::uint64_t generation) {
  if (!fs::exists(path)) return;
  std::ifstream in(path);
  std::string line, kept;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto row = nlohmann::json::parse(line, nullptr, false);
    if (row.is_discarded()) continue;
    if (row.value("generation", std::uint64_t{0}) <= generation) kept += line + "\n";
  }
  in.close();
  const std::vector<std::uint8_t> bytes(kept.begin(), kept.end());
  write_file_atomic(path.string(), bytes);
}

}  // namespace

// ---- Agent -------------------------------------------------------------------------------

Agent::Agent(const AgentConfig& config, std::span<const double> genome)
    : config_(config), grid_(config.grid()), params_(decode(genome, config)),
      state_(reset_controller(static_cast<std::size_t>(config.hidden))) {}

void Agent::reset() { state_ = reset_controller(static_cast<std::size_t>(config_.hidden)); }

Agent::Decision Agent::act(const Frame& observation) {
  Decision d;
  d.input = resize_nearest(observation, config_.input_size);
  d.perception = attend(d.input, grid_, params_.attention, static_cast<std::size_t>(config_.top_k));
  const std::vector<double> features = flatten_centers(d.perception.centers);
  auto [action, next] = step_controller(features, state_, params_.controller, config_.action);
  state_ = std::move(next);
  d.action = std::move(action);
  return d;
}

// ---- Rollouts ----------------------------------------------------------------------------

RolloutResult rollout_episode(std::span<const double> genome, const AgentConfig& config,
                              Environment& env, std::uint64_t seed, TraceOptions trace,
                              int max_steps) {
  AgentConfig cfg = config;
  cfg.action = env.spec().action;
  if (!(cfg.action == config.action))
    throw ConfigError("rollout: agent action spec does not match environment " + env.spec().name);
  Agent agent(cfg, genome);
  RolloutResult result;
  if (trace.record) result.trace.emplace();
  const int limit = max_steps > 0 ? max_steps : std::numeric_limits<int>::max();

  Frame obs = env.reset(seed);
  double score = 0.0;
  for (int t = 0; t < limit; ++t) {
    Agent::Decision d;
    try {
      d = agent.act(obs);
    } catch (const NumericError&) {
      result.aborted = true;
      break;
    }
    EnvStep s = env.step(d.action);
    score += s.reward;
    ++result.steps;
    if (result.trace) {
      StepRecord rec;
      rec.selected = d.perception.selected;
      rec.importance = std::move(d.perception.importance);
      rec.action = d.action;
      rec.reward = s.reward;
      rec.done = s.done;
      result.trace->steps.push_back(std::move(rec));
      if (trace.keep_frames) result.trace->inputs.push_back(std::move(d.input));
    }
    if (s.done) break;
    obs = std::move(s.observation);
  }
  result.score = result.aborted ? env.spec().min_score : score;
  if (result.trace) {
    result.trace->score = score;
    result.trace->aborted = result.aborted;
  }
  return result;
}

double evaluate_fitness(std::span<const double> genome, const AgentConfig& config,
                        const RolloutPlan& plan, std::uint64_t generation, std::uint64_t individual) {
  if (plan.rollouts < 1) throw ConfigError("rollout plan: R must be >= 1");
  std::vector<double> scores(static_cast<std::size_t>(plan.rollouts));
  for (int r = 0; r < plan.rollouts; ++r) {
    const std::uint64_t seed = rollout_seed(plan.run_seed, SeedDomain::Train, generation, individual,
                                            static_cast<std::uint64_t>(r));
    try {
      auto env = plan.factory();
      scores[static_cast<std::size_t>(r)] =
          rollout_episode(genome, config, *env, seed, {}, plan.max_steps).score;
    } catch (const SessionError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  }
  return mean_finite(scores, nullptr);
}

std::vector<double> evaluate_population(std::span<const std::vector<double>> candidates,
                                        const AgentConfig& config, const RolloutPlan& plan,
                                        std::uint64_t generation, int workers) {
  if (plan.rollouts < 1) throw ConfigError("rollout plan: R must be >= 1");
  const std::size_t r_count = static_cast<std::size_t>(plan.rollouts);
  const std::size_t jobs = candidates.size() * r_count;
  std::vector<double> scores(jobs, 0.0);
  EnvPool pool(plan.factory, workers);
  parallel_jobs(jobs, workers, [&](std::size_t job, std::size_t thread) {
    const std::size_t individual = job / r_count, r = job % r_count;
    const std::uint64_t seed = rollout_seed(plan.run_seed, SeedDomain::Train, generation, individual, r);
    try {
      scores[job] = rollout_episode(candidates[individual], config, pool.get(thread), seed, {},
                                    plan.max_steps)
                        .score;
    } catch (const SessionError&) {
      scores[job] = std::numeric_limits<double>::quiet_NaN();
      pool.drop(thread);
    }
  });
  std::vector<double> fitness(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    double sum = 0.0;
    for (std::size_t r = 0; r < r_count; ++r) sum += scores[i * r_count + r];
    fitness[i] = sum / static_cast<double>(r_count);  // NaN propagates
  }
  return fitness;
}

ScoreSummary evaluate_episodes(std::span<const double> genome, const AgentConfig& config,
                               const EnvFactory& factory, int episodes, std::uint64_t seed,
                               int workers, int max_steps) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  std::vector<double> scores(static_cast<std::size_t>(episodes));
  EnvPool pool(factory, workers);
  parallel_jobs(scores.size(), workers, [&](std::size_t e, std::size_t thread) {
    const std::uint64_t s = rollout_seed(seed, SeedDomain::Eval, 0, 0, e);
    scores[e] = rollout_episode(genome, config, pool.get(thread), s, {}, max_steps).score;
  });
  return summarize(std::move(scores));
}

// ---- Checkpoints -------------------------------------------------------------------------

void save_run_checkpoint(const std::string& path, const RunCheckpoint& ckpt) {
  ByteWriter w;
  // The genome block comes first so genome readers can open run checkpoints directly.
  write_genome(w, ckpt.policy);
  w.raw(std::string_view(kRunMagic, 8));
  w.u32(kRunFormatVersion);
  w.u64(ckpt.generation);
  w.u64(ckpt.run_seed);
  ckpt.optimizer.save(w);
  write_file_atomic(path, w.data());
}

RunCheckpoint load_run_checkpoint(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  GenomeCheckpoint policy = read_genome(r);
  if (r.raw(8) != std::string_view(kRunMagic, 8))
    throw CodecError(path + " is a genome file, not a training checkpoint");
  if (const auto v = r.u32(); v != kRunFormatVersion)
    throw CodecError("unsupported run checkpoint version " + std::to_string(v));
  const std::uint64_t generation = r.u64();
  const std::uint64_t run_seed = r.u64();
  CmaEs optimizer = CmaEs::load(r);
  if (optimizer.dim() != policy.genome.size())
    throw CodecError("run checkpoint: optimizer dimension does not match the genome");
  return RunCheckpoint{std::move(policy), generation, run_seed, std::move(optimizer)};
}

// ---- Training ----------------------------------------------------------------------------

TrainResult train(const TrainRun& run, const std::function<void(const GenerationReport&)>& progress) {
  run.agent.validate();
  if (run.out_dir.empty()) throw ConfigError("train: output directory is required");
  if (run.eval_every < 1 || run.eval_episodes < 1)
    throw ConfigError("train: eval cadence and episode count must be >= 1");
  const fs::path out(run.out_dir);
  fs::create_directories(out);
  const fs::path metrics = out / kMetricsFile, ckpt_path = out / kCheckpointFile;
  const GenomeLayout layout = GenomeLayout::of(run.agent);

  std::optional<CmaEs> es;
  std::uint64_t start = 0;
  double policy_score = std::numeric_limits<double>::quiet_NaN();  // latest eval mean
  if (run.resume && fs::exists(ckpt_path)) {
    RunCheckpoint ck = load_run_checkpoint(ckpt_path.string());
    if (GenomeLayout::of(ck.policy.config).hash() != layout.hash() || !(ck.policy.config == run.agent))
      throw ConfigError("resume refused: checkpoint genome layout differs from the configured agent");
    if (ck.run_seed != run.plan.run_seed)
      throw ConfigError("resume refused: checkpoint was written with a different run seed");
    start = ck.generation;
    policy_score = ck.policy.fitness;
    es.emplace(std::move(ck.optimizer));
    truncate_metrics(metrics, start);
  } else {
    if (fs::exists(metrics)) fs::remove(metrics);
    es.emplace(std::vector<double>(layout.total, 0.0), run.optimizer);
  }

  TrainResult result;
  const auto mean_genome = [&] {
    const Eigen::VectorXd& m = es->state().mean;
    return std::vector<double>(m.data(), m.data() + m.size());
  };
  for (std::uint64_t gen = start + 1; gen <= static_cast<std::uint64_t>(run.generations); ++gen) {
    const auto candidates = es->ask();
    const auto fitness = evaluate_population(candidates, run.agent, run.plan, gen, run.workers);
    es->tell(candidates, fitness);

    GenerationReport rep;
    rep.generation = gen;
    rep.mean = mean_finite(fitness, &rep.nan_count);
    rep.best = -std::numeric_limits<double>::infinity();
    for (double f : fitness)
      if (!std::isnan(f)) rep.best = std::max(rep.best, f);
    if (rep.nan_count == fitness.size()) rep.best = std::numeric_limits<double>::quiet_NaN();
    rep.sigma = es->state().sigma;
    rep.best_ever = es->has_best() ? es->best().fitness : std::numeric_limits<double>::quiet_NaN();

    // Single noisy fitness estimates favour lucky candidates, so the policy that gets
    // evaluated and saved is the distribution mean.
    GenomeCheckpoint policy{run.agent, mean_genome(), policy_score};
    if (gen % static_cast<std::uint64_t>(run.eval_every) == 0) {
      rep.eval = evaluate_episodes(policy.genome, run.agent, run.plan.factory, run.eval_episodes,
                                   run.plan.run_seed, run.workers, run.plan.max_steps);
      result.last_eval = rep.eval;
      policy.fitness = policy_score = rep.eval->mean;
    }
    save_run_checkpoint(ckpt_path.string(), RunCheckpoint{policy, gen, run.plan.run_seed, *es});
    append_metrics(metrics, rep);
    if (progress) progress(rep);
    result.reports.push_back(rep);
    result.generations = gen;
    result.policy = std::move(policy);
    if (rep.eval && run.target_eval_score && rep.eval->mean >= *run.target_eval_score) break;
  }
  if (result.reports.empty()) {
    result.generations = start;
    result.policy = GenomeCheckpoint{run.agent, mean_genome(), policy_score};
  }
  return result;
}

// ---- Generalization ----------------------------------------------------------------------

std::vector<SuiteRow> generalization_suite(std::span<const double> genome, const AgentConfig& config,
                                           const EnvFactory& base,
                                           std::span<const EnvModification> mods, int episodes,
                                           std::uint64_t seed, int workers) {
  std::vector<SuiteRow> rows;
  SuiteRow original;
  original.condition = "original";
  original.summary = evaluate_episodes(genome, config, base, episodes, seed, workers);
  rows.push_back(std::move(original));
  for (const EnvModification& mod : mods) {
    SuiteRow row;
    row.condition = std::string(to_string(mod.kind));
    try {
      (void)apply_modification(base(), mod);
      const EnvFactory wrapped = [&base, mod] { return apply_modification(base(), mod); };
      row.summary = evaluate_episodes(genome, config, wrapped, episodes, seed, workers);
    } catch (const ConfigError& e) {
      row.ok = false;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_suite(std::span<const SuiteRow> rows) {
  std::ostringstream out;
  out.precision(10);
  out << "condition\tmean\tstd\tepisodes\tnote\n";
  for (const auto& r : rows) {
    if (r.ok)
      out << r.condition << "\t" << r.summary.mean << "\t" << r.summary.std << "\t"
          << r.summary.scores.size() << "\t\n";
    else
      out << r.condition << "\t\t\t0\t" << r.error << "\n";
  }
  return out.str();
}

// ---- Analysis and overlays ---------------------------------------------------------------

AnalysisReport importance_analysis(std::span<const EpisodeTrace> traces, const PatchGrid& grid,
                                   const AnalysisOptions& options) {
  std::vector<double> values;
  for (const auto& t : traces)
    for (const auto& s : t.steps) values.insert(values.end(), s.importance.begin(), s.importance.end());
  if (values.empty()) throw ConfigError("importance analysis: traces contain no steps");
  if (options.bins < 1) throw ConfigError("importance analysis: bins must be >= 1");
  for (const auto& t : traces)
    if (t.inputs.size() != t.steps.size())
      throw ConfigError("importance analysis: traces must keep their input frames");

  AnalysisReport rep;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const double q = std::clamp(options.quantile, 0.0, 1.0);
  const auto qi = static_cast<std::size_t>(std::floor(q * static_cast<double>(sorted.size() - 1)));
  rep.threshold = sorted[qi];
  const double hi = sorted.back();

  if (hi == rep.threshold) {
    rep.edges = {rep.threshold, hi};
    rep.counts = {static_cast<std::size_t>(sorted.end() - (sorted.begin() + static_cast<std::ptrdiff_t>(qi)))};
  } else {
    const auto bins = static_cast<std::size_t>(options.bins);
    rep.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b)
      rep.edges[b] = rep.threshold + (hi - rep.threshold) * static_cast<double>(b) / static_cast<double>(bins);
    rep.counts.assign(bins, 0);
    for (std::size_t i = qi; i < sorted.size(); ++i) {
      auto b = static_cast<std::size_t>((sorted[i] - rep.threshold) / (hi - rep.threshold) * static_cast<double>(bins));
      ++rep.counts[std::min(b, bins - 1)];
    }
  }

  rep.ranges = options.ranges;
  if (rep.ranges.empty()) {
    if (hi == rep.threshold) {
      rep.ranges = {{rep.threshold, hi}};
    } else {
      for (int k = 0; k < 4; ++k)
        rep.ranges.emplace_back(rep.threshold + (hi - rep.threshold) * k / 4.0,
                                rep.threshold + (hi - rep.threshold) * (k + 1) / 4.0);
    }
  }

  // Reservoir sampling per range, in trace/step/patch order.
  std::mt19937_64 rng(mix_seed({options.seed, 0x616e616c79736973ULL}));
  const auto samples = static_cast<std::size_t>(std::max(0, options.samples_per_range));
  rep.exemplars.assign(rep.ranges.size(), {});
  std::vector<std::size_t> seen(rep.ranges.size(), 0);
  for (std::size_t ti = 0; ti < traces.size(); ++ti)
    for (std::size_t si = 0; si < traces[ti].steps.size(); ++si) {
      const auto& imp = traces[ti].steps[si].importance;
      for (std::size_t p = 0; p < imp.size(); ++p)
        for (std::size_t r = 0; r < rep.ranges.size(); ++r) {
          const auto [lo, up] = rep.ranges[r];
          const bool last = r + 1 == rep.ranges.size();
          if (!(imp[p] >= lo && (imp[p] < up || (last && imp[p] <= up)))) continue;
          const std::size_t k = seen[r]++;
          std::size_t slot = k;
          if (k >= samples) {
            slot = std::uniform_int_distribution<std::size_t>(0, k)(rng);
            if (slot >= samples) continue;
          }
          PatchExemplar ex{ti, si, static_cast<int>(p), imp[p], {}};
          if (slot < rep.exemplars[r].size())
            rep.exemplars[r][slot] = std::move(ex);
          else
            rep.exemplars[r].push_back(std::move(ex));
        }
    }
  for (auto& list : rep.exemplars)
    for (auto& ex : list) {
      const Frame& f = traces[ex.trace].inputs[ex.step];
      const int r = ex.patch / grid.cols, c = ex.patch % grid.cols;
      Frame patch(grid.window, grid.window);
      for (int y = 0; y < grid.window; ++y)
        for (int x = 0; x < grid.window; ++x)
          for (int ch = 0; ch < 3; ++ch)
            patch.at(y, x, ch) = f.at(r * grid.stride + y, c * grid.stride + x, ch);
      ex.pixels = to_image(patch);
    }
  return rep;
}

Image attention_overlay(const Frame& input, const PatchGrid& grid, std::span<const int> selected,
                        std::span<const double> importance, double max_opacity) {
  if (input.height != grid.input_size || input.width != grid.input_size)
    throw ConfigError("attention_overlay: frame size does not match the grid");
  Frame out = input;
  const double k = static_cast<double>(selected.size());
  for (int idx : selected) {
    std::size_t not_above = 0;
    for (int other : selected)
      if (importance[static_cast<std::size_t>(other)] <= importance[static_cast<std::size_t>(idx)]) ++not_above;
    const float alpha = static_cast<float>(max_opacity * static_cast<double>(not_above) / k);
    const int r = idx / grid.cols, c = idx % grid.cols;
    for (int y = r * grid.stride; y < r * grid.stride + grid.window; ++y)
      for (int x = c * grid.stride; x < c * grid.stride + grid.window; ++x)
        for (int ch = 0; ch < 3; ++ch) {
          float& v = out.at(y, x, ch);
          v = v * (1.0f - alpha) + alpha;
        }
  }
  return to_image(out);
}

}  // namespace attnes
