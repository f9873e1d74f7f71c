// Acceptance checks: one PASS/FAIL line per criterion. Exit status is nonzero if any fails.
//
//   acceptance [--only NAME] [--workers N] [--keep DIR]
//
// The toy training check is long (tens of minutes on one core); --only selects a single check.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <omp.h>

#include <CLI11.hpp>

#include "attnes/binary_io.hpp"
#include "attnes/harness.hpp"
#include "attnes/image_io.hpp"
#include "attnes/seeding.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace attnes;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int g_workers = 1;

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

AgentConfig toy_agent() {
  AgentConfig c;
  c.input_size = 48;
  c.window = 5;
  c.stride = 4;
  c.dim = 4;
  c.top_k = 5;
  c.hidden = 8;
  c.action = ActionSpec::discrete(3);
  return c;
}

Outcome parameter_parity() {
  const ParamCounts pc = count_params(AgentConfig{});
  const bool ok = pc == ParamCounts{592, 592, 2483, 3667};
  return {ok, fmt("{%zu, %zu, %zu, %zu}", pc.query, pc.key, pc.lstm, pc.total)};
}

Outcome grid_parity() {
  const PatchGrid g = PatchGrid::make(96, 7, 4);
  return {g.count() == 529 && g.patch_dim() == 147, fmt("N=%zu d_in=%zu", g.count(), g.patch_dim())};
}

Outcome attention_invariants() {
  std::mt19937_64 rng(20240601);
  double row_err = 0, vote_err = 0, oracle_err = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 32, din = 1 + rng() % 16, d = 1 + rng() % 4;
    const Matrix x = oracle::random_matrix(rng, n, din);
    const AttentionParams p = oracle::random_attention(rng, din, d);
    const Matrix a = attention_matrix(x, p);
    const Matrix y = weighted_output(a, x);
    const auto ref = oracle::attention(x, p);
    const auto yref = oracle::weighted(ref, x);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < n; ++j) {
        s += a(i, j);
        oracle_err = std::max(oracle_err, std::abs(a(i, j) - static_cast<double>(ref[i][j])));
      }
      row_err = std::max(row_err, std::abs(s - 1.0));
      for (std::size_t c = 0; c < din; ++c)
        oracle_err = std::max(oracle_err, std::abs(y(i, c) - static_cast<double>(yref[i][c])));
    }
    const auto imp = importance_vector(a);
    double total = 0;
    for (double v : imp) total += v;
    vote_err = std::max(vote_err, std::abs(total - static_cast<double>(n)));
  }
  return {row_err <= 1e-6 && vote_err <= 1e-4 && oracle_err <= 1e-10,
          fmt("max |rowsum-1|=%.1e, max |sum imp - N|=%.1e, max oracle diff=%.1e", row_err, vote_err, oracle_err)};
}

Outcome lstm_oracle() {
  std::mt19937_64 rng(77);
  double err = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t in = 2 * (1 + rng() % 10), h = 1 + rng() % 16, na = 1 + rng() % 3;
    const LstmParams p{oracle::random_matrix(rng, 4 * h, in, 0.5), oracle::random_matrix(rng, 4 * h, h, 0.5),
                       oracle::random_vector(rng, 4 * h, 0.5),     oracle::random_vector(rng, 4 * h, 0.5),
                       oracle::random_matrix(rng, na, h),          oracle::random_vector(rng, na)};
    ControllerState s{oracle::random_vector(rng, h), oracle::random_vector(rng, h)};
    const auto x = oracle::random_vector(rng, in);
    const auto ref = oracle::lstm_step(x, s.h, s.c, p);
    const bool discrete = trial % 2 == 1;
    std::vector<ActionBounds> bounds(na, ActionBounds{-2.0, 3.0});
    const ActionSpec spec = discrete ? ActionSpec::discrete(na) : ActionSpec::continuous(bounds);
    const auto [act, next] = step_controller(x, s, p, spec);
    for (std::size_t j = 0; j < h; ++j) {
      err = std::max(err, std::abs(next.h[j] - static_cast<double>(ref.h[j])));
      err = std::max(err, std::abs(next.c[j] - static_cast<double>(ref.c[j])));
    }
    if (discrete) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < na; ++k)
        if (ref.out[k] > ref.out[best]) best = k;
      if (act.index != static_cast<int>(best)) err = INFINITY;
    } else {
      for (std::size_t k = 0; k < na; ++k)
        err = std::max(err, std::abs(act.values[k] - (-2.0 + (std::tanh(static_cast<double>(ref.out[k])) + 1) * 2.5)));
    }
  }
  // Zero parameters: zero state, bound midpoints, index 0.
  const LstmParams zero = LstmParams::zeros(20, 16, 3);
  const std::vector<double> feats(20, 0.37);
  const auto [ca, cs] = step_controller(feats, reset_controller(16), zero, ActionSpec::continuous({{-1, 1}, {0, 1}, {0, 1}}));
  const auto [da, ds] = step_controller(feats, reset_controller(16), zero, ActionSpec::discrete(3));
  bool zero_ok = ca.values == std::vector<double>{0.0, 0.5, 0.5} && da.index == 0;
  for (double v : cs.h) zero_ok = zero_ok && v == 0.0;
  for (double v : ds.h) zero_ok = zero_ok && v == 0.0;
  return {err <= 1e-12 && zero_ok, fmt("max diff=%.1e, zero case %s", err, zero_ok ? "ok" : "wrong")};
}

Outcome codec_round_trip() {
  std::mt19937_64 rng(5);
  const AgentConfig cfg;
  bool ok = true;
  for (int t = 0; t < 100; ++t) {
    auto g = oracle::random_vector(rng, 3667, t % 2 ? 1e-3 : 1e3);
    const auto d = decode(g, cfg);
    ok = ok && encode(d.attention, d.controller, cfg) == g;
  }
  const fs::path path = fs::temp_directory_path() / "attnes_acceptance_genome.bin";
  GenomeCheckpoint ck{cfg, oracle::random_vector(rng, 3667), -17.5};
  ck.genome[0] = -0.0;
  ck.genome[1] = std::numeric_limits<double>::denorm_min();
  save_genome(path.string(), ck);
  const auto bytes = read_file_bytes(path.string());
  const GenomeCheckpoint back = load_genome(path.string());
  bool bits = back.genome.size() == ck.genome.size() &&
              std::memcmp(back.genome.data(), ck.genome.data(), 8 * ck.genome.size()) == 0 &&
              back.config == ck.config && back.fitness == ck.fitness;
  save_genome(path.string(), back);
  bits = bits && read_file_bytes(path.string()) == bytes;
  fs::remove(path);
  return {ok && bits, fmt("100 genomes %s, checkpoint %s", ok ? "identical" : "differ", bits ? "bit-identical" : "differs")};
}

Outcome cmaes_convergence() {
  CmaConfig sphere_cfg{16, 0, 0.5, 1};
  const auto s = support::minimize(oracle::sphere, std::vector<double>(10, 1.0), sphere_cfg, 1e-10, 20000);
  CmaConfig rosen_cfg{32, 0, 0.5, 2};
  const auto r = support::minimize(oracle::rosenbrock, std::vector<double>(5, 0.0), rosen_cfg, 1e-6, 100000);

  // Rank invariance: a strictly increasing transform of fitness gives the same trajectory.
  // Scaling by a power of two keeps every comparison exact.
  CmaConfig cfg{12, 0, 0.3, 9};
  CmaEs a(std::vector<double>(8, 0.5), cfg), b(std::vector<double>(8, 0.5), cfg);
  bool same = true;
  for (int g = 0; g < 50 && same; ++g) {
    const auto pa = a.ask(), pb = b.ask();
    std::vector<double> fa, fb;
    for (const auto& x : pa) {
      const double v = -oracle::rosenbrock(x);
      fa.push_back(v);
      fb.push_back(std::ldexp(v, 3));
    }
    a.tell(pa, fa);
    b.tell(pb, fb);
    same = pa == pb && a.state().mean == b.state().mean && a.state().sigma == b.state().sigma &&
           a.state().cov == b.state().cov && a.best().x == b.best().x;
  }
  const bool ok = s.best < 1e-10 && s.evaluations <= 20000 && r.best < 1e-6 && r.evaluations <= 100000 && same;
  return {ok, fmt("sphere f=%.1e after %zu evals; rosenbrock f=%.1e after %zu evals; rank invariance %s", s.best,
                  s.evaluations, r.best, r.evaluations, same ? "exact" : "broken")};
}

Outcome toy_training(const fs::path& dir) {
  const EnvFactory dodge = builtin_env("dodge");
  const ScoreSummary baseline = random_baseline(dodge, 100, 2024);
  const double target = 2.0 * baseline.mean;
  TrainRun run;
  run.agent = toy_agent();
  run.optimizer = CmaConfig{64, 0, 0.1, 1};
  run.plan = RolloutPlan{dodge, 5, 0, 1};
  run.generations = 300;
  run.eval_every = 10;
  run.eval_episodes = 100;
  run.workers = g_workers;
  run.out_dir = (dir / "toy").string();
  run.target_eval_score = target;
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult r = train(run, [](const GenerationReport& g) {
    if (g.eval) std::fprintf(stderr, "  toy training: gen %llu eval %.2f +- %.2f\n",
                             static_cast<unsigned long long>(g.generation), g.eval->mean, g.eval->std);
  });
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  double best_eval = -INFINITY;
  for (const auto& g : r.reports)
    if (g.eval) best_eval = std::max(best_eval, g.eval->mean);
  const bool ok = r.last_eval && r.last_eval->mean >= target;
  return {ok, fmt("random baseline %.2f, target %.2f, eval %.2f at generation %llu (best eval %.2f), %.1f min",
                  baseline.mean, target, r.last_eval ? r.last_eval->mean : NAN,
                  static_cast<unsigned long long>(r.generations), best_eval, minutes)};
}

Outcome modification_transparency() {
  int replays = 0, mismatches = 0;
  for (ModificationKind kind : all_modifications()) {
    for (const char* name : {"laneracer", "dodge"}) {
      if (!builtin_env(name)()->supports(kind)) continue;
      for (int ep = 0; ep < 20; ++ep) {
        auto plain = builtin_env(name)();
        auto mod = apply_modification(builtin_env(name)(), {kind});
        plain->reset(1000 + ep);
        mod->reset(1000 + ep);
        // Fixed action sequence per replay.
        std::mt19937_64 rng(static_cast<std::uint64_t>(ep));
        std::vector<double> ra, rb;
        for (int t = 0; t < 300; ++t) {
          Action a;
          if (plain->spec().action.kind == ActionKind::Discrete)
            a.index = static_cast<int>(rng() % 3);
          else
            a.values = {std::uniform_real_distribution<double>(-1, 1)(rng), 0.7, 0.0};
          const EnvStep x = plain->step(a), y = mod->step(a);
          ra.push_back(x.reward);
          rb.push_back(y.reward);
          if (x.done || y.done) break;
        }
        ++replays;
        if (std::memcmp(ra.data(), rb.data(), 8 * ra.size()) != 0 || ra.size() != rb.size()) ++mismatches;
      }
    }
  }
  return {mismatches == 0 && replays == 120, fmt("%d replays over 6 modifications, %d mismatches", replays, mismatches)};
}

Outcome determinism(const fs::path& dir) {
  auto smoke = [&](const std::string& name, int gens, int workers, bool resume) {
    TrainRun run;
    run.agent = toy_agent();
    run.optimizer = CmaConfig{8, 0, 0.1, 4};
    run.plan = RolloutPlan{builtin_env("dodge"), 2, 200, 99};
    run.generations = gens;
    run.eval_every = 2;
    run.eval_episodes = 3;
    run.workers = workers;
    run.out_dir = (dir / name).string();
    run.resume = resume;
    train(run);
    return dir / name;
  };
  const auto w1 = smoke("w1", 3, 1, false), w8 = smoke("w8", 3, 8, false);
  const bool schedule = slurp(w1 / kMetricsFile) == slurp(w8 / kMetricsFile) &&
                        slurp(w1 / kCheckpointFile) == slurp(w8 / kCheckpointFile);
  const auto full = smoke("full", 6, 2, false);
  smoke("split", 3, 2, false);
  const auto split = smoke("split", 6, 2, true);
  const bool resume = slurp(full / kMetricsFile) == slurp(split / kMetricsFile) &&
                      slurp(full / kCheckpointFile) == slurp(split / kCheckpointFile);
  return {schedule && resume, fmt("workers 1 vs 8 %s; resume at 3 of 6 %s", schedule ? "identical" : "differ",
                                  resume ? "bit-identical" : "differs")};
}

Outcome visualization(const fs::path& dir) {
  // Zero genome, full-size agent on the racer, driven through the command-line tool.
  const AgentConfig cfg;
  const PatchGrid grid = cfg.grid();
  const GenomeCheckpoint ck{cfg, std::vector<double>(GenomeLayout::of(cfg).total, 0.0), 0.0};
  const fs::path ck_path = dir / "zero.genome", cfg_path = dir / "viz.json", out = dir / "viz";
  save_genome(ck_path.string(), ck);
  std::ofstream(cfg_path) << R"({"schema_version": 1, "seed": 3, "env": {"name": "laneracer"},
                                 "rollout": {"max_steps": 60}})";
  const std::string cmd = std::string(ATTNES_CLI) + " viz --config " + cfg_path.string() + " --checkpoint " +
                          ck_path.string() + " --out " + out.string() + " > /dev/null";
  const int status = std::system(cmd.c_str());
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) return {false, "viz command failed"};

  // Same episode through the library for the raw input frames.
  auto env = builtin_env("laneracer")();
  const RolloutResult r =
      rollout_episode(ck.genome, cfg, *env, rollout_seed(3, SeedDomain::Eval, 0, 0, 0), {true, true}, 60);

  std::ifstream log(out / "episode.tsv");
  std::string line;
  std::getline(log, line);
  std::vector<std::vector<int>> logged;
  while (std::getline(log, line)) {
    std::vector<int> sel;
    std::stringstream cells(line.substr(line.rfind('\t') + 1));
    for (std::string tok; std::getline(cells, tok, ',');) sel.push_back(std::stoi(tok));
    logged.push_back(sel);
  }
  std::size_t images = 0;
  for (const auto& e : fs::directory_iterator(out)) images += e.path().extension() == ".ppm";

  const std::vector<int> tie_rule{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  bool indices_ok = logged.size() == static_cast<std::size_t>(r.steps);
  bool uniform = true;
  int worst = 0;
  for (std::size_t t = 0; t < logged.size() && indices_ok; ++t) {
    const StepRecord& s = r.trace->steps[t];
    indices_ok = logged[t] == s.selected && s.selected == tie_rule;
    for (double v : s.importance) uniform = uniform && v == s.importance[0];
    char name[32];
    std::snprintf(name, sizeof name, "step_%05zu.ppm", t);
    const Image img = read_ppm((out / name).string());
    const Frame& raw = r.trace->inputs[t];
    // Every selected window blends towards white at 0.6; overlaps compound.
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x) {
        int cover = 0;
        for (int k : logged[t]) {
          const int y0 = (k / grid.cols) * grid.stride, x0 = (k % grid.cols) * grid.stride;
          cover += y >= y0 && y < y0 + grid.window && x >= x0 && x < x0 + grid.window;
        }
        for (int c = 0; c < 3; ++c) {
          const double want = 255.0 * (1.0 - (1.0 - raw.at(y, x, c)) * std::pow(0.4, cover));
          worst = std::max(worst, static_cast<int>(std::abs(img.px(y, x)[c] - std::lround(want))));
        }
      }
  }
  const bool ok = images == static_cast<std::size_t>(r.steps) && indices_ok && uniform && worst <= 1;
  return {ok, fmt("%d steps, %zu overlays, indices %s, tie-rule selection %s, max pixel error %d", r.steps, images,
                  indices_ok ? "match trace" : "differ", uniform ? "uniform" : "not uniform", worst)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string only;
  std::string keep;
  g_workers = omp_get_max_threads();
  app.add_option("--only", only, "run a single check by name");
  app.add_option("--workers", g_workers, "threads for training checks");
  app.add_option("--keep", keep, "directory for run outputs (default: a fresh temp dir)");
  CLI11_PARSE(app, argc, argv);

  const fs::path dir = keep.empty() ? support::scratch_dir("acceptance") : fs::path(keep);
  fs::create_directories(dir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"parameter_parity", parameter_parity},
      {"grid_parity", grid_parity},
      {"attention_invariants", attention_invariants},
      {"lstm_oracle", lstm_oracle},
      {"codec_round_trip", codec_round_trip},
      {"cmaes_convergence", cmaes_convergence},
      {"modification_transparency", modification_transparency},
      {"determinism_resume", [&] { return determinism(dir); }},
      {"visualization_contract", [&] { return visualization(dir); }},
      {"toy_training", [&] { return toy_training(dir); }},
  };
  int failed = 0, ran = 0;
  for (const auto& [name, check] : checks) {
    if (!only.empty() && only != name) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s  %-26s %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  if (ran == 0) {
    std::fprintf(stderr, "no check named %s\n", only.c_str());
    return 2;
  }
  return failed == 0 ? 0 : 1;
}
