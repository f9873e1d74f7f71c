#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "attnes/binary_io.hpp"
#include "attnes/genome.hpp"
#include "oracles.hpp"

using namespace attnes;

TEST_CASE("parameter counts match counting oracle") {
  const AgentConfig cfg;
  const ParamCounts pc = count_params(cfg);
  CHECK(pc == ParamCounts{592, 592, 2483, 3667});
  for (auto [L, M, S, d, K, h] : {std::tuple{48, 5, 4, 4, 5, 8}, std::tuple{64, 8, 8, 2, 3, 4}, std::tuple{96, 7, 4, 4, 10, 16}}) {
    AgentConfig c;
    c.input_size = L, c.window = M, c.stride = S, c.dim = d, c.top_k = K, c.hidden = h;
    c.action = ActionSpec::discrete(3);
    const auto o = oracle::count(L, M, S, d, K, h, 3);
    const auto got = count_params(c);
    CHECK(got.query == o.query);
    CHECK(got.key == o.key);
    CHECK(got.lstm == o.lstm);
    CHECK(got.total == o.total);
    CHECK(GenomeLayout::of(c).total == o.total);
  }
}

TEST_CASE("layout segments") {
  const GenomeLayout l = GenomeLayout::of(AgentConfig{});
  std::vector<std::size_t> sizes;
  std::vector<std::string> names;
  std::size_t off = 0;
  for (const auto& s : l.segments) {
    CHECK(s.offset == off);
    off += s.length;
    sizes.push_back(s.length);
    names.push_back(s.name);
  }
  CHECK(sizes == std::vector<std::size_t>{588, 4, 588, 4, 1280, 1024, 64, 64, 48, 3});
  CHECK(names == std::vector<std::string>{"W_q", "b_q", "W_k", "b_k", "W_ih", "W_hh", "b_ih", "b_hh", "W_out", "b_out"});
  CHECK(l.total == 3667);
  CHECK(l.hash() == GenomeLayout::of(AgentConfig{}).hash());
  AgentConfig other;
  other.hidden = 15;
  CHECK(l.hash() != GenomeLayout::of(other).hash());
}

TEST_CASE("decode places values row-major in segment order") {
  AgentConfig c;
  std::vector<double> g(3667);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i);
  const DecodedGenome d = decode(g, c);
  CHECK(d.attention.query_weight(0, 1) == 1.0);
  CHECK(d.attention.query_weight(1, 0) == 4.0);
  CHECK(d.attention.query_bias[0] == 588.0);
  CHECK(d.attention.key_weight(0, 0) == 592.0);
  CHECK(d.controller.w_ih(0, 1) == 1185.0);
  CHECK(d.controller.w_hh(0, 0) == 2464.0);
  CHECK(d.controller.b_out[2] == 3666.0);
  CHECK(encode(d.attention, d.controller, c) == g);
}

TEST_CASE("decode rejects wrong length and names the expected size") {
  std::vector<double> g(100);
  try {
    decode(g, AgentConfig{});
    FAIL("expected CodecError");
  } catch (const CodecError& e) {
    CHECK(std::string(e.what()).find("3667") != std::string::npos);
  }
}

TEST_CASE("codec round trip on random genomes") {
  std::mt19937_64 rng(4);
  AgentConfig c;
  for (int t = 0; t < 20; ++t) {
    const auto g = oracle::random_vector(rng, 3667);
    const auto d = decode(g, c);
    CHECK(encode(d.attention, d.controller, c) == g);
  }
}

TEST_CASE("checkpoint file round trip is bit exact") {
  std::mt19937_64 rng(8);
  GenomeCheckpoint ck{AgentConfig{}, oracle::random_vector(rng, 3667), 123.25};
  ck.genome[5] = -0.0;
  ck.genome[6] = 5e-324;
  const auto path = (std::filesystem::temp_directory_path() / "attnes_genome_test.bin").string();
  save_genome(path, ck);
  const auto bytes = read_file_bytes(path);
  const GenomeCheckpoint back = load_genome(path);
  CHECK(back.config == ck.config);
  CHECK(back.fitness == ck.fitness);
  REQUIRE(back.genome.size() == ck.genome.size());
  CHECK(std::memcmp(back.genome.data(), ck.genome.data(), 8 * ck.genome.size()) == 0);
  save_genome(path, back);
  CHECK(read_file_bytes(path) == bytes);

  // Flipping a config field breaks the layout hash check.
  auto corrupt = bytes;
  corrupt[8 + 4 + 8 + 4 * 5] ^= 1;  // hidden size
  ByteReader r(corrupt);
  CHECK_THROWS_AS(read_genome(r), CodecError);
  std::vector<std::uint8_t> truncated(bytes.begin(), bytes.begin() + 40);
  ByteReader r2(truncated);
  CHECK_THROWS_AS(read_genome(r2), CodecError);
  std::filesystem::remove(path);
}

TEST_CASE("agent config validation") {
  AgentConfig c;
  c.top_k = 600;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AgentConfig{};
  c.window = 100;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AgentConfig{};
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
