#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "attnes/controller.hpp"
#include "attnes/core.hpp"

namespace attnes {

struct EnvSpec {
  std::string name;
  int observation_size = 96;  // frames are observation_size^2 x 3
  ActionSpec action;
  int max_steps = 0;
  double solve_threshold = 0.0;
  double min_score = 0.0;  // lowest attainable episode score
};

struct EnvStep {
  Frame observation;
  double reward = 0.0;
  bool done = false;
};

enum class ModificationKind {
  ColorPerturb,
  VerticalBars,
  BackgroundBlob,
  HigherWalls,
  FloorTexture,
  HoverText,
};

std::string_view to_string(ModificationKind kind);
/// Accepts the names produced by to_string; throws ConfigError otherwise.
ModificationKind parse_modification(std::string_view name);
const std::vector<ModificationKind>& all_modifications();

/// A rendering-only change. Parameters not used by `kind` are ignored.
struct EnvModification {
  ModificationKind kind = ModificationKind::ColorPerturb;
  double color_range = 0.2;      // ColorPerturb: offsets ~ U[-range, range]
  double bar_fraction = 0.075;   // VerticalBars: share of frame width per side
  int blob_radius = 7;           // BackgroundBlob, in pixels
  double wall_height = 2.0;      // HigherWalls: multiplier on the wall band height
};

/// Per-episode rendering variant resolved from a modification and the episode seed.
struct RenderVariant {
  std::optional<ModificationKind> kind;
  double lane_offset = 0.0;
  double grass_offset = 0.0;
  double bar_fraction = 0.0;
  int blob_radius = 0;
  double wall_height = 1.0;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  /// Deterministic in `seed`. Starts a new episode.
  virtual Frame reset(std::uint64_t seed) = 0;
  /// Throws ProtocolError when called before reset or after the episode ended.
  virtual EnvStep step(const Action& action) = 0;

  virtual bool supports(ModificationKind) const { return false; }
  /// Applied from the next reset on. Must not change dynamics or reward.
  virtual void set_render_variant(const RenderVariant&) {}
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

/// Top-down racing analog: -0.1 per step, +1000/n per newly visited tile of an n-tile closed
/// track driven counter-clockwise. Ends after max_steps or when every tile was visited.
/// Actions: steer [-1, 1], gas [0, 1], brake [0, 1].
class LaneRacer final : public Environment {
 public:
  struct Track {
    std::vector<double> x;  // tile start points along the centre line, CCW
    std::vector<double> y;
    double half_width = 6.0;
    std::size_t tiles() const { return x.size(); }
  };

  explicit LaneRacer(int observation_size = 96, int max_steps = 1000);

  const EnvSpec& spec() const override { return spec_; }
  Frame reset(std::uint64_t seed) override;
  EnvStep step(const Action& action) override;
  bool supports(ModificationKind kind) const override;
  void set_render_variant(const RenderVariant& v) override { variant_ = v; }

  const Track& track() const { return track_; }
  std::size_t visited_count() const { return visited_count_; }
  int steps() const { return steps_; }
  double speed() const { return speed_; }
  /// Tile under the car, or -1 on grass.
  int tile_at(double x, double y) const;
  /// Signed area of the tile polygon; positive means counter-clockwise.
  double signed_area() const;

  static Track generate_track(std::uint64_t seed);

 private:
  Image render() const;
  void rasterize();

  EnvSpec spec_;
  RenderVariant variant_;
  Track track_;
  // Tile-id raster of the road in world coordinates (cell size kCell).
  std::vector<int> raster_;
  int raster_w_ = 0, raster_h_ = 0;
  double raster_x0_ = 0.0, raster_y0_ = 0.0;
  std::vector<bool> visited_;
  std::size_t visited_count_ = 0;
  double car_x_ = 0.0, car_y_ = 0.0, heading_ = 0.0, speed_ = 0.0;
  int steps_ = 0;
  bool active_ = false;
};

/// Projectile-dodging analog: +1 per surviving step, at most max_steps, ends on a hit.
/// Discrete actions in declared order: 0 = left, 1 = right, 2 = stay.
class Dodge final : public Environment {
 public:
  enum Move { Left = 0, Right = 1, Stay = 2 };

  struct Projectile {
    double origin = 0.0;  // lateral position at spawn
    double target = 0.0;  // lateral position on arrival
    double depth = 1.0;   // 1 at spawn, 0 on arrival
    double speed = 0.0;   // depth units per step
    double lateral() const { return target + (origin - target) * depth; }
  };

  explicit Dodge(int observation_size = 96, int max_steps = 2100);

  const EnvSpec& spec() const override { return spec_; }
  Frame reset(std::uint64_t seed) override;
  EnvStep step(const Action& action) override;
  bool supports(ModificationKind kind) const override;
  void set_render_variant(const RenderVariant& v) override { variant_ = v; }

  double agent_position() const { return agent_x_; }
  const std::vector<Projectile>& projectiles() const { return projectiles_; }
  int steps() const { return steps_; }

  static constexpr double kArenaHalfWidth = 1.0;
  static constexpr double kMoveSpeed = 0.07;
  static constexpr double kHitRadius = 0.16;

 private:
  Image render() const;
  void maybe_spawn();

  EnvSpec spec_;
  RenderVariant variant_;
  std::mt19937_64 rng_;
  double agent_x_ = 0.0;
  std::vector<Projectile> projectiles_;
  int steps_ = 0;
  bool active_ = false;
};

/// Wraps `env` so each episode renders with `mod`. Throws ConfigError for pairings the
/// environment does not support (e.g. HigherWalls on LaneRacer).
std::unique_ptr<Environment> apply_modification(std::unique_ptr<Environment> env,
                                                const EnvModification& mod);

/// "laneracer" or "dodge"; throws ConfigError for anything else.
EnvFactory builtin_env(std::string_view name);

struct ScoreSummary {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> scores;
};

ScoreSummary summarize(std::vector<double> scores);

/// Uniform-random policy over the action space, one episode per derived seed.
ScoreSummary random_baseline(const EnvFactory& factory, int episodes, std::uint64_t seed);

}  // namespace attnes
