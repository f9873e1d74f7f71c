#include "attnes/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "attnes/bridge.hpp"
#include "attnes/seeding.hpp"

namespace attnes {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) {
      const std::string path = where.empty() ? key : where + "." + key;
      throw ConfigError("config: unknown key '" + path + "'");
    }
  }
}

template <class T>
void read(const json& obj, const std::string& where, const char* key, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string path = where.empty() ? key : where + "." + key;
  try {
    if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_unsigned() || it->template get<std::int64_t>() >= 0) {
          out = it->template get<T>();
          return;
        }
        throw ConfigError("");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError("");
    } else {
      if (!it->is_string()) throw ConfigError("");
    }
    out = it->template get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config: '" + path + "' has the wrong type (" + it->dump() + ")");
  }
}

const json& section(const json& root, const char* name) {
  static const json empty = json::object();
  const auto it = root.find(name);
  return it == root.end() ? empty : *it;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  check_keys(root, "", {"schema_version", "seed", "agent", "optimizer", "env", "rollout", "train",
                        "output", "generalize", "analyze"});
  if (!root.contains("schema_version")) throw ConfigError("config: missing key 'schema_version'");
  int version = 0;
  read(root, "", "schema_version", version);
  if (version != kConfigSchemaVersion)
    throw ConfigError("config: 'schema_version' " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kConfigSchemaVersion) + ")");

  RunConfig c;
  read(root, "", "seed", c.seed);

  const json& a = section(root, "agent");
  check_keys(a, "agent", {"input_size", "window", "stride", "dim", "top_k", "hidden"});
  read(a, "agent", "input_size", c.agent.input_size);
  read(a, "agent", "window", c.agent.window);
  read(a, "agent", "stride", c.agent.stride);
  read(a, "agent", "dim", c.agent.dim);
  read(a, "agent", "top_k", c.agent.top_k);
  read(a, "agent", "hidden", c.agent.hidden);

  const json& o = section(root, "optimizer");
  check_keys(o, "optimizer", {"population", "parents", "sigma0"});
  read(o, "optimizer", "population", c.optimizer.population);
  read(o, "optimizer", "parents", c.optimizer.parents);
  read(o, "optimizer", "sigma0", c.optimizer.sigma0);
  if (!(c.optimizer.sigma0 > 0.0)) throw ConfigError("config: 'optimizer.sigma0' must be positive");

  const json& e = section(root, "env");
  check_keys(e, "env", {"name", "bridge"});
  read(e, "env", "name", c.env.name);
  read(e, "env", "bridge", c.env.bridge);
  if (c.env.bridge.empty() && c.env.name != "dodge" && c.env.name != "laneracer")
    throw ConfigError("config: 'env.name' must be \"dodge\" or \"laneracer\", got \"" + c.env.name + "\"");

  const json& r = section(root, "rollout");
  check_keys(r, "rollout", {"rollouts", "max_steps"});
  read(r, "rollout", "rollouts", c.rollout.rollouts);
  read(r, "rollout", "max_steps", c.rollout.max_steps);
  if (c.rollout.rollouts < 1) throw ConfigError("config: 'rollout.rollouts' must be >= 1");
  if (c.rollout.max_steps < 0) throw ConfigError("config: 'rollout.max_steps' must be >= 0");

  const json& t = section(root, "train");
  check_keys(t, "train", {"generations", "eval_every", "eval_episodes", "workers", "target_eval_score"});
  read(t, "train", "generations", c.train.generations);
  read(t, "train", "eval_every", c.train.eval_every);
  read(t, "train", "eval_episodes", c.train.eval_episodes);
  read(t, "train", "workers", c.train.workers);
  if (auto it = t.find("target_eval_score"); it != t.end() && !it->is_null()) {
    double v = 0.0;
    read(t, "train", "target_eval_score", v);
    c.train.target_eval_score = v;
  }
  if (c.train.generations < 0) throw ConfigError("config: 'train.generations' must be >= 0");
  if (c.train.eval_every < 1) throw ConfigError("config: 'train.eval_every' must be >= 1");
  if (c.train.eval_episodes < 1) throw ConfigError("config: 'train.eval_episodes' must be >= 1");
  if (c.train.workers < 1) throw ConfigError("config: 'train.workers' must be >= 1");

  const json& out = section(root, "output");
  check_keys(out, "output", {"dir"});
  read(out, "output", "dir", c.output.dir);

  const json& g = section(root, "generalize");
  check_keys(g, "generalize", {"episodes", "mods"});
  read(g, "generalize", "episodes", c.generalize.episodes);
  if (auto it = g.find("mods"); it != g.end()) {
    if (!it->is_array()) throw ConfigError("config: 'generalize.mods' must be an array of names");
    for (const auto& m : *it) {
      if (!m.is_string()) throw ConfigError("config: 'generalize.mods' must be an array of names");
      const auto name = m.get<std::string>();
      try {
        (void)parse_modification(name);
      } catch (const ConfigError&) {
        throw ConfigError("config: 'generalize.mods' has unknown modification \"" + name + "\"");
      }
      c.generalize.mods.push_back(name);
    }
  }
  if (c.generalize.episodes < 1) throw ConfigError("config: 'generalize.episodes' must be >= 1");

  const json& an = section(root, "analyze");
  check_keys(an, "analyze", {"episodes", "quantile", "bins", "samples_per_range", "ranges"});
  read(an, "analyze", "episodes", c.analyze.episodes);
  read(an, "analyze", "quantile", c.analyze.quantile);
  read(an, "analyze", "bins", c.analyze.bins);
  read(an, "analyze", "samples_per_range", c.analyze.samples_per_range);
  if (auto it = an.find("ranges"); it != an.end()) {
    const auto bad = [] { return ConfigError("config: 'analyze.ranges' must be a list of [lo, hi] pairs"); };
    if (!it->is_array()) throw bad();
    for (const auto& p : *it) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) throw bad();
      const double lo = p[0].get<double>(), hi = p[1].get<double>();
      if (!(lo <= hi)) throw bad();
      c.analyze.ranges.emplace_back(lo, hi);
    }
  }
  if (c.analyze.episodes < 1) throw ConfigError("config: 'analyze.episodes' must be >= 1");
  if (c.analyze.bins < 1) throw ConfigError("config: 'analyze.bins' must be >= 1");
  if (!(c.analyze.quantile >= 0.0 && c.analyze.quantile <= 1.0))
    throw ConfigError("config: 'analyze.quantile' must lie in [0, 1]");
  return c;
}

std::string serialize_run_config(const RunConfig& c) {
  ojson root;
  root["schema_version"] = kConfigSchemaVersion;
  root["seed"] = c.seed;
  root["agent"] = {{"input_size", c.agent.input_size}, {"window", c.agent.window},
                   {"stride", c.agent.stride},         {"dim", c.agent.dim},
                   {"top_k", c.agent.top_k},           {"hidden", c.agent.hidden}};
  root["optimizer"] = {{"population", c.optimizer.population},
                       {"parents", c.optimizer.parents},
                       {"sigma0", c.optimizer.sigma0}};
  root["env"] = {{"name", c.env.name}, {"bridge", c.env.bridge}};
  root["rollout"] = {{"rollouts", c.rollout.rollouts}, {"max_steps", c.rollout.max_steps}};
  ojson train = {{"generations", c.train.generations},
                 {"eval_every", c.train.eval_every},
                 {"eval_episodes", c.train.eval_episodes},
                 {"workers", c.train.workers}};
  train["target_eval_score"] =
      c.train.target_eval_score ? ojson(*c.train.target_eval_score) : ojson(nullptr);
  root["train"] = std::move(train);
  root["output"] = {{"dir", c.output.dir}};
  root["generalize"] = {{"episodes", c.generalize.episodes}, {"mods", c.generalize.mods}};
  ojson ranges = ojson::array();
  for (const auto& [lo, hi] : c.analyze.ranges) ranges.push_back({lo, hi});
  root["analyze"] = {{"episodes", c.analyze.episodes},
                     {"quantile", c.analyze.quantile},
                     {"bins", c.analyze.bins},
                     {"samples_per_range", c.analyze.samples_per_range},
                     {"ranges", ranges}};
  return root.dump(2) + "\n";
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

EnvFactory make_env_factory(const RunConfig& config) {
  if (!config.env.bridge.empty()) return bridge_env(config.env.bridge);
  return builtin_env(config.env.name);
}

AgentConfig make_agent_config(const RunConfig& config, const EnvSpec& env) {
  AgentConfig a;
  a.input_size = config.agent.input_size;
  a.window = config.agent.window;
  a.stride = config.agent.stride;
  a.dim = config.agent.dim;
  a.top_k = config.agent.top_k;
  a.hidden = config.agent.hidden;
  a.action = env.action;
  a.validate();
  return a;
}

CmaConfig make_cma_config(const RunConfig& config) {
  CmaConfig c;
  c.population = config.optimizer.population;
  c.parents = config.optimizer.parents;
  c.sigma0 = config.optimizer.sigma0;
  c.seed = mix_seed({config.seed, 0x636d61ULL});
  return c;
}

TrainRun make_train_run(const RunConfig& config, const EnvFactory& factory, const EnvSpec& env) {
  TrainRun run;
  run.agent = make_agent_config(config, env);
  run.optimizer = make_cma_config(config);
  run.plan.factory = factory;
  run.plan.rollouts = config.rollout.rollouts;
  run.plan.max_steps = config.rollout.max_steps;
  run.plan.run_seed = config.seed;
  run.generations = config.train.generations;
  run.eval_every = config.train.eval_every;
  run.eval_episodes = config.train.eval_episodes;
  run.workers = config.train.workers;
  run.out_dir = config.output.dir;
  run.target_eval_score = config.train.target_eval_score;
  return run;
}

std::vector<EnvModification> make_modifications(const RunConfig& config) {
  std::vector<EnvModification> mods;
  if (config.generalize.mods.empty()) {
    for (ModificationKind k : all_modifications()) mods.push_back(EnvModification{k});
  } else {
    for (const auto& name : config.generalize.mods) mods.push_back(EnvModification{parse_modification(name)});
  }
  return mods;
}

}  // namespace attnes
