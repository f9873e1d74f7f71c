#include <doctest.h>

#include "attnes/config.hpp"

using namespace attnes;

TEST_CASE("defaults follow the reference configuration") {
  const RunConfig c = parse_run_config(R"({"schema_version": 1})");
  CHECK(c.agent.input_size == 96);
  CHECK(c.agent.window == 7);
  CHECK(c.agent.stride == 4);
  CHECK(c.agent.dim == 4);
  CHECK(c.agent.top_k == 10);
  CHECK(c.agent.hidden == 16);
  CHECK(c.optimizer.population == 256);
  CHECK(c.optimizer.sigma0 == 0.1);
  CHECK(c.rollout.rollouts == 16);
  CHECK(c.train.eval_every == 10);
  CHECK(c.train.eval_episodes == 100);
  CHECK(c.analyze.episodes == 20);
  CHECK(c == RunConfig{});
}

TEST_CASE("round trip is identity") {
  RunConfig c;
  c.seed = 123456789012345ULL;
  c.agent.hidden = 8;
  c.optimizer.sigma0 = 0.1 + 1e-17;
  c.env.bridge = "exec:python3 adapter.py --env CarRacing-v0";
  c.train.target_eval_score = 187.5;
  c.generalize.mods = {"higher_walls", "hover_text"};
  c.analyze.ranges = {{1.0, 1.5}, {1.5, 2.25}};
  const std::string text = serialize_run_config(c);
  const RunConfig back = parse_run_config(text);
  CHECK(back == c);
  CHECK(serialize_run_config(back) == text);
  CHECK(parse_run_config(serialize_run_config(RunConfig{})) == RunConfig{});
}

TEST_CASE("errors name the offending key") {
  auto message = [](const char* text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(R"({"schema_version":1,"agent":{"hiden":3}})").find("agent.hiden") != std::string::npos);
  CHECK(message(R"({"schema_version":1,"extra":{}})").find("'extra'") != std::string::npos);
  CHECK(message(R"({"schema_version":1,"train":{"workers":"four"}})").find("train.workers") != std::string::npos);
  CHECK(message(R"({"schema_version":1,"optimizer":{"population":-4}})").find("optimizer.population") != std::string::npos);
  CHECK(message(R"({"agent":{}})").find("schema_version") != std::string::npos);
  CHECK(message(R"({"schema_version":2})").find("schema_version") != std::string::npos);
  CHECK(message(R"({"schema_version":1,"generalize":{"mods":["rainbow"]}})").find("rainbow") != std::string::npos);
  CHECK(message(R"({"schema_version":1,"env":{"name":"pong"}})").find("env.name") != std::string::npos);
  CHECK(message("{not json").find("JSON") != std::string::npos);
}

TEST_CASE("agent config takes the action head from the env") {
  const RunConfig c = parse_run_config(R"({"schema_version":1,"env":{"name":"dodge"}})");
  const auto factory = make_env_factory(c);
  const AgentConfig a = make_agent_config(c, factory()->spec());
  CHECK(a.action == ActionSpec::discrete(3));
  CHECK(count_params(a).total == 592 + 592 + 2483);
  CHECK(make_modifications(c).size() == all_modifications().size());
}
