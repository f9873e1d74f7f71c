#include "attnes/genome.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "attnes/binary_io.hpp"

namespace attnes {

namespace {

constexpr char kGenomeMagic[] = "ATNSGNM\x01";

struct Shape {
  std::size_t rows;
  std::size_t cols;
};

// Segment shapes in layout order; vectors are rows x 1.
std::vector<std::pair<std::string, Shape>> shapes(const AgentConfig& c) {
  const std::size_t din = c.grid().patch_dim(), d = c.dim, h = c.hidden, in = c.features(),
                    a = c.action.dim;
  return {{"W_q", {din, d}},   {"b_q", {d, 1}},     {"W_k", {din, d}},   {"b_k", {d, 1}},
          {"W_ih", {4 * h, in}}, {"W_hh", {4 * h, h}}, {"b_ih", {4 * h, 1}}, {"b_hh", {4 * h, 1}},
          {"W_out", {a, h}},   {"b_out", {a, 1}}};
}

void copy_in(Matrix& m, std::span<const double> src) { std::copy(src.begin(), src.end(), m.data().begin()); }
void copy_in(std::vector<double>& v, std::span<const double> src) { v.assign(src.begin(), src.end()); }

}  // namespace

void AgentConfig::validate() const {
  (void)grid();
  if (dim < 1) throw ConfigError("agent: d must be >= 1");
  if (hidden < 1) throw ConfigError("agent: hidden size must be >= 1");
  if (top_k < 1 || static_cast<std::size_t>(top_k) > grid().count())
    throw ConfigError("agent: K=" + std::to_string(top_k) + " must be in [1, N=" +
                      std::to_string(grid().count()) + "]");
  if (action.dim < 1) throw ConfigError("agent: action dimension must be >= 1");
  if (action.kind == ActionKind::Continuous && action.bounds.size() != action.dim)
    throw ConfigError("agent: continuous action needs one bound pair per dimension");
}

ParamCounts count_params(const AgentConfig& config) {
  const std::size_t din = config.grid().patch_dim(), d = config.dim;
  ParamCounts pc;
  pc.query = din * d + d;
  pc.key = din * d + d;
  pc.lstm = LstmParams::count(config.features(), config.hidden, config.action.dim);
  pc.total = pc.query + pc.key + pc.lstm;
  return pc;
}

GenomeLayout GenomeLayout::of(const AgentConfig& config) {
  config.validate();
  GenomeLayout layout;
  for (const auto& [name, s] : shapes(config)) {
    layout.segments.push_back({name, layout.total, s.rows * s.cols, s.rows, s.cols});
    layout.total += s.rows * s.cols;
  }
  return layout;
}

std::uint64_t GenomeLayout::hash() const {
  std::string desc = "attnes-layout-v1;";
  for (const auto& s : segments)
    desc += s.name + ":" + std::to_string(s.offset) + ":" + std::to_string(s.length) + ":" +
            std::to_string(s.rows) + "x" + std::to_string(s.cols) + ";";
  return fnv1a64(desc);
}

DecodedGenome decode(std::span<const double> genome, const AgentConfig& config) {
  const GenomeLayout layout = GenomeLayout::of(config);
  if (genome.size() != layout.total)
    throw CodecError("decode: genome length " + std::to_string(genome.size()) +
                     " does not match expected P=" + std::to_string(layout.total));
  const std::size_t din = config.grid().patch_dim();
  DecodedGenome out{AttentionParams::zeros(din, config.dim),
                    LstmParams::zeros(config.features(), config.hidden, config.action.dim)};
  auto seg = [&](std::size_t i) {
    return genome.subspan(layout.segments[i].offset, layout.segments[i].length);
  };
  copy_in(out.attention.query_weight, seg(0));
  copy_in(out.attention.query_bias, seg(1));
  copy_in(out.attention.key_weight, seg(2));
  copy_in(out.attention.key_bias, seg(3));
  copy_in(out.controller.w_ih, seg(4));
  copy_in(out.controller.w_hh, seg(5));
  copy_in(out.controller.b_ih, seg(6));
  copy_in(out.controller.b_hh, seg(7));
  copy_in(out.controller.w_out, seg(8));
  copy_in(out.controller.b_out, seg(9));
  return out;
}

std::vector<double> encode(const AttentionParams& attention, const LstmParams& controller,
                           const AgentConfig& config) {
  const GenomeLayout layout = GenomeLayout::of(config);
  const std::vector<const std::vector<double>*> parts = {
      &attention.query_weight.data(), &attention.query_bias, &attention.key_weight.data(),
      &attention.key_bias,            &controller.w_ih.data(), &controller.w_hh.data(),
      &controller.b_ih,               &controller.b_hh,        &controller.w_out.data(),
      &controller.b_out};
  const auto sh = shapes(config);
  std::vector<double> genome;
  genome.reserve(layout.total);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (parts[i]->size() != layout.segments[i].length)
      throw CodecError("encode: segment " + layout.segments[i].name + " has " +
                       std::to_string(parts[i]->size()) + " values, expected " +
                       std::to_string(layout.segments[i].length));
    genome.insert(genome.end(), parts[i]->begin(), parts[i]->end());
  }
  // Shape checks beyond element count: matrices must match exactly.
  if (attention.query_weight.rows() != sh[0].second.rows ||
      attention.key_weight.rows() != sh[2].second.rows ||
      controller.w_ih.cols() != sh[4].second.cols || controller.w_out.rows() != sh[8].second.rows)
    throw CodecError("encode: parameter matrix shapes do not match the config");
  return genome;
}

void write_genome(ByteWriter& out, const GenomeCheckpoint& ckpt) {
  const GenomeLayout layout = GenomeLayout::of(ckpt.config);
  if (ckpt.genome.size() != layout.total)
    throw CodecError("write_genome: genome length " + std::to_string(ckpt.genome.size()) +
                     " does not match P=" + std::to_string(layout.total));
  const AgentConfig& c = ckpt.config;
  out.raw(std::string_view(kGenomeMagic, 8));
  out.u32(kGenomeFormatVersion);
  out.u64(layout.hash());
  out.i32(c.input_size);
  out.i32(c.window);
  out.i32(c.stride);
  out.i32(c.dim);
  out.i32(c.top_k);
  out.i32(c.hidden);
  out.u8(c.action.kind == ActionKind::Continuous ? 0 : 1);
  out.u32(static_cast<std::uint32_t>(c.action.dim));
  for (const auto& b : c.action.bounds) {
    out.f64(b.lo);
    out.f64(b.hi);
  }
  out.f64(ckpt.fitness);
  out.u64(ckpt.genome.size());
  for (double v : ckpt.genome) out.f64(v);
}

GenomeCheckpoint read_genome(ByteReader& in) {
  if (in.raw(8) != std::string_view(kGenomeMagic, 8)) throw CodecError("not a genome checkpoint");
  const std::uint32_t version = in.u32();
  if (version != kGenomeFormatVersion)
    throw CodecError("unsupported genome format version " + std::to_string(version));
  const std::uint64_t stored_hash = in.u64();
  GenomeCheckpoint ck;
  AgentConfig& c = ck.config;
  c.input_size = in.i32();
  c.window = in.i32();
  c.stride = in.i32();
  c.dim = in.i32();
  c.top_k = in.i32();
  c.hidden = in.i32();
  const std::uint8_t kind = in.u8();
  const std::uint32_t adim = in.u32();
  if (kind == 0) {
    std::vector<ActionBounds> bounds(adim);
    for (auto& b : bounds) {
      b.lo = in.f64();
      b.hi = in.f64();
    }
    c.action = ActionSpec::continuous(std::move(bounds));
  } else if (kind == 1) {
    c.action = ActionSpec::discrete(adim);
  } else {
    throw CodecError("genome checkpoint: unknown action kind " + std::to_string(kind));
  }
  const GenomeLayout layout = GenomeLayout::of(c);
  if (layout.hash() != stored_hash)
    throw CodecError("genome checkpoint: layout hash mismatch (stored " +
                     std::to_string(stored_hash) + ", expected " + std::to_string(layout.hash()) +
                     ")");
  ck.fitness = in.f64();
  const std::uint64_t n = in.u64();
  if (n != layout.total)
    throw CodecError("genome checkpoint: stored P=" + std::to_string(n) + ", expected " +
                     std::to_string(layout.total));
  ck.genome.resize(n);
  for (auto& v : ck.genome) v = in.f64();
  return ck;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const std::string& path, std::span<const std::uint8_t> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write " + tmp);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw ConfigError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void save_genome(const std::string& path, const GenomeCheckpoint& ckpt) {
  ByteWriter w;
  write_genome(w, ckpt);
  write_file_atomic(path, w.data());
}

GenomeCheckpoint load_genome(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  return read_genome(r);
}

}  // namespace attnes
