#include <doctest.h>

#include <sys/socket.h>

#include <chrono>
#include <cstring>
#include <fstream>
#include <iterator>
#include <thread>

#include "attnes/bridge.hpp"
#include "attnes/harness.hpp"
#include "oracles.hpp"

using namespace attnes;
using namespace std::chrono_literals;

namespace {

std::vector<std::uint8_t> fixture(const char* name) {
  std::ifstream f(std::string(ATTNES_FIXTURE_DIR) + "/" + name, std::ios::binary);
  REQUIRE(f.good());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Replays canned input and records everything written.
class ScriptStream final : public Stream {
 public:
  explicit ScriptStream(std::vector<std::uint8_t> input,
                        std::shared_ptr<std::vector<std::uint8_t>> sink = std::make_shared<std::vector<std::uint8_t>>())
      : written(std::move(sink)), input_(std::move(input)) {}
  void write_all(std::span<const std::uint8_t> b) override { written->insert(written->end(), b.begin(), b.end()); }
  void read_exact(std::span<std::uint8_t> out) override {
    if (pos_ + out.size() > input_.size()) throw SessionError("script exhausted");
    std::memcpy(out.data(), input_.data() + pos_, out.size());
    pos_ += out.size();
  }
  std::shared_ptr<std::vector<std::uint8_t>> written;

 private:
  std::vector<std::uint8_t> input_;
  std::size_t pos_ = 0;
};

// Mirrors the environment described in tests/fixtures/make_bridge_golden.py.
class FakeEnv final : public Environment {
 public:
  FakeEnv() {
    spec_.name = "fake";
    spec_.observation_size = 4;
    spec_.action = ActionSpec::continuous({{-1, 1}, {0, 1}, {0, 1}});
    spec_.max_steps = 10;
  }
  const EnvSpec& spec() const override { return spec_; }
  Frame reset(std::uint64_t seed) override {
    t_ = 0;
    Image img(4, 4);
    for (int i = 0; i < 48; ++i) img.bytes[i] = static_cast<std::uint8_t>((seed + i) % 256);
    return to_frame(img);
  }
  EnvStep step(const Action& a) override {
    ++t_;
    Image img(4, 4);
    for (int i = 0; i < 48; ++i) img.bytes[i] = static_cast<std::uint8_t>((t_ * 7 + i * 3) % 256);
    return {to_frame(img), t_ * 0.5 - a.values[0], t_ == 3};
  }

 private:
  EnvSpec spec_;
  int t_ = 0;
};

const std::vector<std::vector<double>> kActions{{0.25, 0.5, 0.0}, {-1.0, 1.0, 0.125}, {0.5, 0.0, 1.0}};

}  // namespace

TEST_CASE("client bytes match the golden stream") {
  auto sink = std::make_shared<std::vector<std::uint8_t>>();
  BridgeSession session(std::make_unique<ScriptStream>(fixture("bridge_server.bin"), sink));
  CHECK(session.handshake().env_name == "fake");
  CHECK(session.handshake().action == ActionSpec::continuous({{-1, 1}, {0, 1}, {0, 1}}));
  const Frame f0 = session.reset(1234);
  CHECK(to_image(f0).bytes[0] == (1234 % 256));
  double total = 0;
  for (std::size_t t = 0; t < kActions.size(); ++t) {
    const EnvStep s = session.step(Action{kActions[t], -1});
    CHECK(s.reward == (t + 1) * 0.5 - kActions[t][0]);
    CHECK(s.done == (t == 2));
    total += s.reward;
  }
  session.close();
  CHECK(*sink == fixture("bridge_client.bin"));
}

TEST_CASE("adapter bytes match the golden stream") {
  ScriptStream stream(fixture("bridge_client.bin"));
  FakeEnv env;
  serve_environment(stream, env);
  const auto want = fixture("bridge_server.bin");
  REQUIRE(stream.written->size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK_MESSAGE((*stream.written)[i] == want[i], i);
  CHECK(*stream.written == fixture("bridge_server.bin"));
}

TEST_CASE("message codec round trip") {
  const std::vector<BridgeMessage> msgs{HelloMsg{1},
                                        BridgeHandshake{1, "dodge", 96, 96, 3, ActionSpec::discrete(3), 2100},
                                        ResetMsg{~0ULL},
                                        StepMsg{{1.5, -2.0}},
                                        ObsMsg{-0.1, true, std::vector<std::uint8_t>(12, 7)},
                                        ErrorMsg{2, "boom"},
                                        CloseMsg{}};
  for (const auto& m : msgs) {
    const auto bytes = encode_message(m);
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data(), 4);
    CHECK(len == bytes.size() - 4);
    const auto back = decode_message(std::span(bytes).subspan(4), 12);
    CHECK(back.index() == m.index());
    CHECK(encode_message(back) == bytes);
  }
}

TEST_CASE("malformed frames are protocol errors") {
  auto obs = encode_message(ObsMsg{0.0, false, std::vector<std::uint8_t>(12, 1)});
  CHECK_THROWS_AS(decode_message(std::span(obs).subspan(4), 11), ProtocolError);
  CHECK_THROWS_AS(decode_message(std::span(obs).subspan(4), 13), ProtocolError);
  const std::vector<std::uint8_t> unknown{0x42};
  CHECK_THROWS_AS(decode_message(unknown, 0), ProtocolError);
  auto hello = encode_message(HelloMsg{1});
  hello.push_back(0);
  CHECK_THROWS_AS(decode_message(std::span(hello).subspan(4), 0), ProtocolError);
}

TEST_CASE("handshake validation") {
  auto bad_version = encode_message(BridgeHandshake{2, "x", 4, 4, 3, ActionSpec::discrete(3), 5});
  CHECK_THROWS_AS(BridgeSession(std::make_unique<ScriptStream>(bad_version)), ProtocolError);
  auto bad_shape = encode_message(BridgeHandshake{1, "x", 0, 4, 3, ActionSpec::discrete(3), 5});
  CHECK_THROWS_AS(BridgeSession(std::make_unique<ScriptStream>(bad_shape)), ProtocolError);
  auto not_handshake = encode_message(ResetMsg{1});
  CHECK_THROWS_AS(BridgeSession(std::make_unique<ScriptStream>(not_handshake)), ProtocolError);
}

TEST_CASE("adapter error codes map to error types") {
  auto hs = encode_message(BridgeHandshake{1, "x", 4, 4, 3, ActionSpec::discrete(3), 5});
  auto script = hs;
  const auto e1 = encode_message(ErrorMsg{1, "bad"});
  script.insert(script.end(), e1.begin(), e1.end());
  BridgeSession s1(std::make_unique<ScriptStream>(script));
  CHECK_THROWS_AS(s1.reset(1), ProtocolError);

  script = hs;
  const auto e2 = encode_message(ErrorMsg{2, "env died"});
  script.insert(script.end(), e2.begin(), e2.end());
  BridgeSession s2(std::make_unique<ScriptStream>(script));
  CHECK_THROWS_AS(s2.reset(1), SessionError);
}

TEST_CASE("discrete actions travel as one index value") {
  CHECK(BridgeSession::action_values(Action{{}, 2}, ActionSpec::discrete(3)) == std::vector<double>{2.0});
  CHECK(BridgeSession::action_values(Action{{0.1, 0.2, 0.3}, -1}, ActionSpec::continuous({{-1, 1}, {0, 1}, {0, 1}})) ==
        std::vector<double>{0.1, 0.2, 0.3});
}

TEST_CASE("bridged env is indistinguishable from the built-in one") {
  for (const char* name : {"dodge", "laneracer"}) {
    int sv[2];
    REQUIRE(::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) == 0);
    std::thread server([fd = sv[1], name] {
      FdStream stream(fd, fd, 10s);
      auto env = builtin_env(name)();
      serve_environment(stream, *env);
    });
    {
      BridgeEnvironment bridged(std::make_unique<BridgeSession>(std::make_unique<FdStream>(sv[0], sv[0], 10s)));
      auto direct = builtin_env(name)();
      CHECK(bridged.spec().action == direct->spec().action);
      CHECK(bridged.spec().name == direct->spec().name);
      AgentConfig cfg;
      cfg.input_size = 48;
      cfg.window = 5;
      cfg.top_k = 5;
      cfg.hidden = 8;
      cfg.action = direct->spec().action;
      std::mt19937_64 rng(1);
      for (int g = 0; g < 2; ++g) {
        const auto genome = oracle::random_vector(rng, GenomeLayout::of(cfg).total, 0.3);
        const auto a = rollout_episode(genome, cfg, bridged, 77 + g, {true, false}, 150);
        const auto b = rollout_episode(genome, cfg, *direct, 77 + g, {true, false}, 150);
        CHECK(a.score == b.score);
        CHECK(a.steps == b.steps);
        REQUIRE(a.trace->steps.size() == b.trace->steps.size());
        for (std::size_t t = 0; t < a.trace->steps.size(); ++t) {
          CHECK(a.trace->steps[t].selected == b.trace->steps[t].selected);
          CHECK(a.trace->steps[t].action == b.trace->steps[t].action);
        }
      }
    }  // session closes here
    server.join();
  }
}

TEST_CASE("exec endpoint runs the loopback adapter") {
  const std::string ep = std::string("exec:") + ATTNES_LOOPBACK + " --env dodge";
  auto env = bridge_env(ep)();
  CHECK(env->spec().name == "dodge");
  auto direct = builtin_env("dodge")();
  Frame a = env->reset(5), b = direct->reset(5);
  CHECK(a == b);
  for (int t = 0; t < 30; ++t) {
    const Action act{{}, t % 3};
    const EnvStep x = env->step(act), y = direct->step(act);
    CHECK(x.reward == y.reward);
    CHECK(x.observation == y.observation);
  }
  // Bad action index is rejected by the adapter without killing the session.
  CHECK_THROWS_AS(env->step(Action{{}, 9}), ProtocolError);
  CHECK_NOTHROW(env->reset(6));
}

TEST_CASE("tcp endpoint") {
  // The adapter prints its port on the first line of stdout.
  FILE* p = ::popen((std::string(ATTNES_LOOPBACK) + " --env laneracer --listen 0").c_str(), "r");
  REQUIRE(p != nullptr);
  int port = 0;
  REQUIRE(std::fscanf(p, "%d", &port) == 1);
  {
    auto env = bridge_env("tcp:127.0.0.1:" + std::to_string(port))();
    CHECK(env->spec().name == "laneracer");
    const Frame f = env->reset(3);
    CHECK(f.height == 96);
    CHECK(env->step(Action{{0.0, 1.0, 0.0}, -1}).reward < 1000.0);
  }
  CHECK(::pclose(p) == 0);
}

TEST_CASE("dead or silent adapters raise SessionError") {
  BridgeOptions fast{200ms};
  const auto t0 = std::chrono::steady_clock::now();
  CHECK_THROWS_AS(connect_bridge("exec:sleep 3", fast), SessionError);
  CHECK(std::chrono::steady_clock::now() - t0 < 2s);
  CHECK_THROWS_AS(connect_bridge("exec:true", fast), SessionError);
  CHECK_THROWS_AS(connect_bridge("tcp:127.0.0.1:1", fast), SessionError);
  CHECK_THROWS_AS(connect_bridge("carrier-pigeon:foo"), ConfigError);

  // Adapter crashes mid-episode: broken pipe / EOF on the next exchange.
  auto env = bridge_env(std::string("exec:") + ATTNES_LOOPBACK + " --env dodge --crash-after 2")();
  env->reset(1);
  env->step(Action{{}, 0});
  env->step(Action{{}, 0});
  CHECK_THROWS_AS(env->step(Action{{}, 0}), SessionError);
}

TEST_CASE("fitness of a crashing bridged env is NaN") {
  AgentConfig cfg;
  cfg.input_size = 48;
  cfg.window = 5;
  cfg.top_k = 5;
  cfg.hidden = 8;
  cfg.action = ActionSpec::discrete(3);
  RolloutPlan plan{bridge_env(std::string("exec:") + ATTNES_LOOPBACK + " --env dodge --crash-after 5"), 2, 50, 1};
  const std::vector<double> zero(GenomeLayout::of(cfg).total, 0.0);
  CHECK(std::isnan(evaluate_fitness(zero, cfg, plan, 1, 0)));
  const std::vector<std::vector<double>> pop{zero, zero};
  const auto f = evaluate_population(pop, cfg, plan, 1, 2);
  CHECK(std::isnan(f[0]));
  CHECK(std::isnan(f[1]));
}
