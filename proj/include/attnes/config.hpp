#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attnes/cmaes.hpp"
#include "attnes/envs.hpp"
#include "attnes/genome.hpp"
#include "attnes/harness.hpp"

namespace attnes {

inline constexpr int kConfigSchemaVersion = 1;

/// Declarative run description, stored as JSON. Every field has a default, so "{}" plus a
/// schema_version is a valid file. Unknown keys are rejected.
///
///   schema_version  1
///   seed            run seed
///   agent           input_size, window, stride, dim, top_k, hidden (action comes from env)
///   optimizer       population, parents, sigma0
///   env             name ("dodge" | "laneracer") or bridge ("tcp:HOST:PORT" | "exec:CMD")
///   rollout         rollouts, max_steps
///   train           generations, eval_every, eval_episodes, workers, target_eval_score|null
///   output          dir
///   generalize      episodes, mods (modification names)
///   analyze         episodes, quantile, bins, samples_per_range, ranges ([[lo, hi], ...])
struct RunConfig {
  std::uint64_t seed = 0;

  struct Agent {
    int input_size = 96;
    int window = 7;
    int stride = 4;
    int dim = 4;
    int top_k = 10;
    int hidden = 16;
    bool operator==(const Agent&) const = default;
  } agent;

  struct Optimizer {
    std::size_t population = 256;
    std::size_t parents = 0;  // 0 = half the population
    double sigma0 = 0.1;
    bool operator==(const Optimizer&) const = default;
  } optimizer;

  struct Env {
    std::string name = "laneracer";
    std::string bridge;  // non-empty replaces the built-in env
    bool operator==(const Env&) const = default;
  } env;

  struct Rollout {
    int rollouts = 16;
    int max_steps = 0;  // 0 = environment limit
    bool operator==(const Rollout&) const = default;
  } rollout;

  struct Train {
    int generations = 1000;
    int eval_every = 10;
    int eval_episodes = 100;
    int workers = 1;
    std::optional<double> target_eval_score;
    bool operator==(const Train&) const = default;
  } train;

  struct Output {
    std::string dir = "runs/default";
    bool operator==(const Output&) const = default;
  } output;

  struct Generalize {
    int episodes = 100;
    std::vector<std::string> mods;  // empty = all built-in modifications
    bool operator==(const Generalize&) const = default;
  } generalize;

  struct Analyze {
    int episodes = 20;
    double quantile = 0.95;
    int bins = 20;
    int samples_per_range = 8;
    std::vector<std::pair<double, double>> ranges;
    bool operator==(const Analyze&) const = default;
  } analyze;

  bool operator==(const RunConfig&) const = default;
};

/// Throws ConfigError naming the offending key.
RunConfig parse_run_config(const std::string& text);
std::string serialize_run_config(const RunConfig& config);
/// Missing or unreadable file is a ConfigError.
RunConfig load_run_config(const std::string& path);

/// Environment factory for the configured built-in env or bridge endpoint.
EnvFactory make_env_factory(const RunConfig& config);
/// Agent architecture with the action head taken from the environment.
AgentConfig make_agent_config(const RunConfig& config, const EnvSpec& env);
CmaConfig make_cma_config(const RunConfig& config);
TrainRun make_train_run(const RunConfig& config, const EnvFactory& factory, const EnvSpec& env);
/// Configured modifications, or all of them when the list is empty.
std::vector<EnvModification> make_modifications(const RunConfig& config);

}  // namespace attnes
