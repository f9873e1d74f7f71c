// attnes: train / eval / viz / gen / analyze over JSON run configs.
//
// Exit codes: 0 ok, 1 runtime failure, 2 usage (bad flags, missing files, invalid config,
// checkpoint that does not fit the configured agent).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "attnes/config.hpp"
#include "attnes/harness.hpp"
#include "attnes/image_io.hpp"
#include "attnes/seeding.hpp"

namespace fs = std::filesystem;
using namespace attnes;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::string bridge;
  std::optional<int> workers;
  std::optional<std::uint64_t> seed;
  std::optional<int> episodes;
  bool resume = false;
};

RunConfig resolve_config(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw UsageError("config file not found: " + f.config);
    c = load_run_config(f.config);
  }
  if (!f.bridge.empty()) c.env.bridge = f.bridge;
  if (f.workers) c.train.workers = *f.workers;
  if (f.seed) c.seed = *f.seed;
  if (!f.out.empty()) c.output.dir = f.out;
  if (c.train.workers < 1) throw UsageError("--workers must be >= 1");
  return c;
}

GenomeCheckpoint resolve_checkpoint(const Flags& f) {
  if (f.checkpoint.empty()) throw UsageError("--checkpoint is required");
  if (!fs::exists(f.checkpoint)) throw UsageError("checkpoint not found: " + f.checkpoint);
  return load_genome(f.checkpoint);
}

// Without a config file or bridge, the checkpoint's action head picks the built-in env.
EnvFactory resolve_env(const Flags& f, RunConfig& c, const GenomeCheckpoint& ck) {
  if (f.config.empty() && c.env.bridge.empty())
    c.env.name = ck.config.action.kind == ActionKind::Discrete ? "dodge" : "laneracer";
  return make_env_factory(c);
}

// Checkpoint architecture must agree with the config and the env.
void check_fit(const Flags& f, const RunConfig& c, const GenomeCheckpoint& ck, const EnvSpec& spec) {
  if (!(ck.config.action == spec.action))
    throw ConfigError("checkpoint action head does not match environment " + spec.name);
  if (f.config.empty()) return;
  const AgentConfig want = make_agent_config(c, spec);
  if (GenomeLayout::of(want).hash() != GenomeLayout::of(ck.config).hash() || !(want == ck.config))
    throw ConfigError("checkpoint genome layout does not match the configured agent");
}

std::string format_mean_std(const ScoreSummary& s) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", s.mean, s.std);
  return buf;
}

fs::path ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir);
  return fs::path(dir);
}

std::string action_text(const Action& a) {
  if (a.index >= 0) return std::to_string(a.index);
  std::ostringstream s;
  s.precision(17);
  for (std::size_t i = 0; i < a.values.size(); ++i) s << (i ? "," : "") << a.values[i];
  return s.str();
}

int cmd_train(const Flags& f) {
  if (f.config.empty()) throw UsageError("train needs --config");
  const RunConfig c = resolve_config(f);
  const EnvFactory factory = make_env_factory(c);
  const EnvSpec spec = factory()->spec();
  TrainRun run = make_train_run(c, factory, spec);
  run.resume = f.resume;
  ensure_dir(run.out_dir);
  std::ofstream(fs::path(run.out_dir) / "config.json") << serialize_run_config(c);
  const TrainResult r = train(run, [](const GenerationReport& g) {
    std::cerr << "gen " << g.generation << "  best " << g.best << "  mean " << g.mean << "  sigma "
              << g.sigma;
    if (g.nan_count) std::cerr << "  nan " << g.nan_count;
    if (g.eval) std::cerr << "  eval " << format_mean_std(*g.eval);
    std::cerr << "\n";
  });
  save_genome((fs::path(run.out_dir) / "policy.genome").string(), r.policy);
  std::cerr << "done after " << r.generations << " generations";
  if (r.last_eval) std::cerr << "; last eval " << format_mean_std(*r.last_eval);
  std::cerr << "\n";
  return 0;
}

int cmd_eval(const Flags& f) {
  RunConfig c = resolve_config(f);
  const GenomeCheckpoint ck = resolve_checkpoint(f);
  const EnvFactory factory = resolve_env(f, c, ck);
  const EnvSpec spec = factory()->spec();
  check_fit(f, c, ck, spec);
  const int episodes = f.episodes.value_or(c.train.eval_episodes);
  const ScoreSummary s = evaluate_episodes(ck.genome, ck.config, factory, episodes, c.seed,
                                           c.train.workers, c.rollout.max_steps);
  std::cout << format_mean_std(s) << "\n";
  if (!f.out.empty()) {
    nlohmann::ordered_json j;
    j["env"] = spec.name;
    j["episodes"] = episodes;
    j["seed"] = c.seed;
    j["mean"] = s.mean;
    j["std"] = s.std;
    j["scores"] = s.scores;
    std::ofstream(ensure_dir(f.out) / "eval.json") << j.dump(2) << "\n";
  }
  return 0;
}

int cmd_viz(const Flags& f) {
  RunConfig c = resolve_config(f);
  const GenomeCheckpoint ck = resolve_checkpoint(f);
  if (f.out.empty()) throw UsageError("viz needs --out");
  const EnvFactory factory = resolve_env(f, c, ck);
  auto env = factory();
  check_fit(f, c, ck, env->spec());
  const fs::path out = ensure_dir(f.out);
  const std::uint64_t seed = rollout_seed(c.seed, SeedDomain::Eval, 0, 0, 0);
  const RolloutResult r = rollout_episode(ck.genome, ck.config, *env, seed, {true, true}, c.rollout.max_steps);
  const PatchGrid grid = ck.config.grid();
  std::ofstream log(out / "episode.tsv");
  if (!log) throw std::runtime_error("cannot write to " + out.string());
  log << "step\taction\treward\tdone\tselected\n";
  log.precision(17);
  for (std::size_t t = 0; t < r.trace->steps.size(); ++t) {
    const StepRecord& s = r.trace->steps[t];
    char name[32];
    std::snprintf(name, sizeof name, "step_%05zu.ppm", t);
    write_ppm((out / name).string(), attention_overlay(r.trace->inputs[t], grid, s.selected, s.importance));
    log << t << "\t" << action_text(s.action) << "\t" << s.reward << "\t" << (s.done ? 1 : 0) << "\t";
    for (std::size_t i = 0; i < s.selected.size(); ++i) log << (i ? "," : "") << s.selected[i];
    log << "\n";
  }
  std::cout << r.steps << " steps, score " << r.score << (r.aborted ? " (aborted)" : "") << "\n";
  return 0;
}

int cmd_gen(const Flags& f) {
  RunConfig c = resolve_config(f);
  const GenomeCheckpoint ck = resolve_checkpoint(f);
  const EnvFactory factory = resolve_env(f, c, ck);
  check_fit(f, c, ck, factory()->spec());
  const int episodes = f.episodes.value_or(c.generalize.episodes);
  const auto mods = make_modifications(c);
  const auto rows = generalization_suite(ck.genome, ck.config, factory, mods, episodes, c.seed, c.train.workers);
  const std::string table = format_suite(rows);
  std::cout << table;
  if (!f.out.empty()) std::ofstream(ensure_dir(f.out) / "generalization.tsv") << table;
  return 0;
}

int cmd_analyze(const Flags& f) {
  RunConfig c = resolve_config(f);
  const GenomeCheckpoint ck = resolve_checkpoint(f);
  if (f.out.empty()) throw UsageError("analyze needs --out");
  const EnvFactory factory = resolve_env(f, c, ck);
  auto env = factory();
  check_fit(f, c, ck, env->spec());
  const fs::path out = ensure_dir(f.out);
  const int episodes = f.episodes.value_or(c.analyze.episodes);
  std::vector<EpisodeTrace> traces;
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t seed = rollout_seed(c.seed, SeedDomain::Eval, 0, 0, static_cast<std::uint64_t>(e));
    traces.push_back(*rollout_episode(ck.genome, ck.config, *env, seed, {true, true}, c.rollout.max_steps).trace);
  }
  AnalysisOptions opt;
  opt.quantile = c.analyze.quantile;
  opt.bins = c.analyze.bins;
  opt.samples_per_range = c.analyze.samples_per_range;
  opt.ranges = c.analyze.ranges;
  opt.seed = c.seed;
  const AnalysisReport rep = importance_analysis(traces, ck.config.grid(), opt);

  std::ofstream hist(out / "histogram.tsv");
  hist.precision(17);
  hist << "lo\thi\tcount\n";
  for (std::size_t b = 0; b < rep.counts.size(); ++b)
    hist << rep.edges[b] << "\t" << rep.edges[b + 1] << "\t" << rep.counts[b] << "\n";
  std::ofstream index(out / "exemplars.tsv");
  index.precision(17);
  index << "file\trange_lo\trange_hi\tepisode\tstep\tpatch\timportance\n";
  for (std::size_t r = 0; r < rep.ranges.size(); ++r)
    for (std::size_t i = 0; i < rep.exemplars[r].size(); ++i) {
      const PatchExemplar& ex = rep.exemplars[r][i];
      char name[48];
      std::snprintf(name, sizeof name, "range%02zu_%03zu.ppm", r, i);
      write_ppm((out / name).string(), ex.pixels);
      index << name << "\t" << rep.ranges[r].first << "\t" << rep.ranges[r].second << "\t" << ex.trace
            << "\t" << ex.step << "\t" << ex.patch << "\t" << ex.importance << "\n";
    }
  std::cout << "quantile " << opt.quantile << " threshold " << rep.threshold << ", " << rep.counts.size()
            << " bins, " << episodes << " episodes\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-bottleneck agents trained with CMA-ES"};
  app.require_subcommand(1);
  Flags f;
  const auto common = [&f](CLI::App* sub, bool needs_checkpoint) {
    sub->add_option("--config", f.config, "run config (JSON)");
    auto* ck = sub->add_option("--checkpoint", f.checkpoint, "genome or training checkpoint");
    if (needs_checkpoint) ck->required();
    sub->add_option("--workers", f.workers, "worker threads");
    sub->add_option("--seed", f.seed, "run seed");
    sub->add_option("--out", f.out, "output directory");
    sub->add_option("--bridge", f.bridge, "external env endpoint (tcp:HOST:PORT or exec:CMD)");
    sub->add_option("--episodes", f.episodes, "episode count")->check(CLI::PositiveNumber);
  };
  auto* train_cmd = app.add_subcommand("train", "run CMA-ES training");
  common(train_cmd, false);
  train_cmd->add_flag("--resume", f.resume, "continue from <out>/checkpoint.bin");
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on evaluation seeds");
  common(eval_cmd, true);
  auto* viz_cmd = app.add_subcommand("viz", "write attention overlays for one episode");
  common(viz_cmd, true);
  auto* gen_cmd = app.add_subcommand("gen", "generalization table over modifications");
  common(gen_cmd, true);
  auto* analyze_cmd = app.add_subcommand("analyze", "importance histogram and patch exemplars");
  common(analyze_cmd, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(f);
    if (eval_cmd->parsed()) return cmd_eval(f);
    if (viz_cmd->parsed()) return cmd_viz(f);
    if (gen_cmd->parsed()) return cmd_gen(f);
    return cmd_analyze(f);
  } catch (const UsageError& e) {
    std::cerr << "attnes: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "attnes: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "attnes: " << e.what() << "\n";
    return 1;
  }
}
