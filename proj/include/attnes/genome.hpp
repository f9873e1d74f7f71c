#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "attnes/attention.hpp"
#include "attnes/controller.hpp"

namespace attnes {

class ByteWriter;
class ByteReader;

/// Architecture hyper-parameters. Defaults are the full-size agent with a 3-way head.
struct AgentConfig {
  int input_size = 96;  // L
  int window = 7;       // M
  int stride = 4;       // S
  int dim = 4;          // d
  int top_k = 10;       // K
  int hidden = 16;
  ActionSpec action = ActionSpec::continuous({{-1.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}});

  PatchGrid grid() const { return PatchGrid::make(input_size, window, stride); }
  std::size_t features() const { return 2 * static_cast<std::size_t>(top_k); }
  /// Throws ConfigError if the geometry or sizes are inconsistent.
  void validate() const;

  bool operator==(const AgentConfig&) const = default;
};

struct ParamCounts {
  std::size_t query = 0;
  std::size_t key = 0;
  std::size_t lstm = 0;
  std::size_t total = 0;
  bool operator==(const ParamCounts&) const = default;
};

ParamCounts count_params(const AgentConfig& config);

struct Segment {
  std::string name;
  std::size_t offset = 0;
  std::size_t length = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;  // 1 for vectors
  bool operator==(const Segment&) const = default;
};

/// Frozen segment order: W_q, b_q, W_k, b_k, W_ih, W_hh, b_ih, b_hh, W_out, b_out.
/// Matrices are stored row-major.
struct GenomeLayout {
  std::vector<Segment> segments;
  std::size_t total = 0;

  static GenomeLayout of(const AgentConfig& config);
  /// Stable 64-bit fingerprint of segment names, offsets, lengths and matrix shapes.
  std::uint64_t hash() const;
};

struct DecodedGenome {
  AttentionParams attention;
  LstmParams controller;
  bool operator==(const DecodedGenome&) const = default;
};

/// Throws CodecError naming the expected and actual length on mismatch.
DecodedGenome decode(std::span<const double> genome, const AgentConfig& config);
std::vector<double> encode(const AttentionParams& attention, const LstmParams& controller,
                           const AgentConfig& config);

/// Checkpoint of a single genome with the architecture it belongs to.
struct GenomeCheckpoint {
  AgentConfig config;
  std::vector<double> genome;
  double fitness = 0.0;
};

inline constexpr std::uint32_t kGenomeFormatVersion = 1;

void write_genome(ByteWriter& out, const GenomeCheckpoint& ckpt);
/// Refuses files whose stored layout hash differs from the one recomputed from the config.
GenomeCheckpoint read_genome(ByteReader& in);

void save_genome(const std::string& path, const GenomeCheckpoint& ckpt);
/// Reads a genome file or the genome block at the head of a training checkpoint.
GenomeCheckpoint load_genome(const std::string& path);

}  // namespace attnes
