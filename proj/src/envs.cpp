#include "attnes/envs.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "attnes/seeding.hpp"

namespace attnes {

namespace {

using Rgb = std::array<int, 3>;

constexpr double kPi = std::numbers::pi;

void put(Image& img, int y, int x, const Rgb& c) {
  if (y < 0 || x < 0 || y >= img.height || x >= img.width) return;
  std::uint8_t* p = img.px(y, x);
  for (int k = 0; k < 3; ++k) p[k] = static_cast<std::uint8_t>(std::clamp(c[k], 0, 255));
}

void fill_rect(Image& img, int y0, int x0, int y1, int x1, const Rgb& c) {
  for (int y = std::max(0, y0); y < std::min(img.height, y1); ++y)
    for (int x = std::max(0, x0); x < std::min(img.width, x1); ++x) put(img, y, x, c);
}

void fill_circle(Image& img, double cy, double cx, double r, const Rgb& c) {
  const int y0 = static_cast<int>(std::floor(cy - r)), y1 = static_cast<int>(std::ceil(cy + r));
  const int x0 = static_cast<int>(std::floor(cx - r)), x1 = static_cast<int>(std::ceil(cx + r));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      if (dy * dy + dx * dx <= r * r) put(img, y, x, c);
    }
}

Rgb shift(const Rgb& c, double offset) {
  const int d = static_cast<int>(std::lround(offset * 255.0));
  return {c[0] + d, c[1] + d, c[2] + d};
}

void draw_vertical_bars(Image& img, double fraction) {
  const int w = static_cast<int>(std::lround(fraction * img.width));
  fill_rect(img, 0, 0, img.height, w, {0, 0, 0});
  fill_rect(img, 0, img.width - w, img.height, img.width, {0, 0, 0});
}

// ---- LaneRacer geometry ----------------------------------------------------------------

constexpr double kTrackRadius = 90.0;
constexpr int kCheckpoints = 12;
constexpr double kTileLength = 5.0;
constexpr double kCell = 0.5;          // raster resolution, world units
constexpr double kZoom = 2.0;          // pixels per world unit
constexpr double kMaxSpeed = 2.5;      // world units per step, below kTileLength
constexpr double kAccel = 0.08;
constexpr double kBrake = 0.15;
constexpr double kDrag = 0.01;
constexpr double kGrassDrag = 0.05;
constexpr double kTurnRate = 0.09;     // radians per step at full lock

const Rgb kRoad{102, 102, 102};
const Rgb kGrass{102, 204, 102};
const Rgb kGrassLight{102, 230, 102};
const Rgb kCar{204, 0, 0};
const Rgb kBlob{255, 0, 0};

double catmull_rom(double p0, double p1, double p2, double p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * ((2 * p1) + (-p0 + p2) * t + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t2 +
                (-p0 + 3 * p1 - 3 * p2 + p3) * t3);
}

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double vx = bx - ax, vy = by - ay;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

// ---- Dodge layout (fractions of the frame side) -----------------------------------------

constexpr double kHorizon = 0.42;
constexpr double kPanelTop = 0.875;
constexpr double kWallBand = 0.18;

const Rgb kCeiling{40, 40, 48};
const Rgb kWall{110, 90, 70};
const Rgb kWallDark{70, 50, 40};
const Rgb kFloorA{90, 80, 70};
const Rgb kFloorB{80, 72, 62};
const Rgb kFloorAltA{60, 110, 60};
const Rgb kFloorAltB{150, 170, 120};
const Rgb kPanel{50, 50, 50};
const Rgb kFireOuter{255, 120, 0};
const Rgb kFireCore{255, 230, 80};
const Rgb kHoverBox{30, 60, 200};

// ---- Modification wrapper ------------------------------------------------------------

class ModifiedEnvironment final : public Environment {
 public:
  ModifiedEnvironment(std::unique_ptr<Environment> inner, EnvModification mod)
      : inner_(std::move(inner)), mod_(mod) {}

  const EnvSpec& spec() const override { return inner_->spec(); }

  Frame reset(std::uint64_t seed) override {
    RenderVariant v;
    v.kind = mod_.kind;
    // Separate stream: the episode's dynamics never see these draws.
    std::mt19937_64 rng(mix_seed({seed, static_cast<std::uint64_t>(SeedDomain::Modification)}));
    std::uniform_real_distribution<double> offset(-mod_.color_range, mod_.color_range);
    switch (mod_.kind) {
      case ModificationKind::ColorPerturb:
        v.lane_offset = offset(rng);
        v.grass_offset = offset(rng);
        break;
      case ModificationKind::VerticalBars:
        v.bar_fraction = mod_.bar_fraction;
        break;
      case ModificationKind::BackgroundBlob:
        v.blob_radius = mod_.blob_radius;
        break;
      case ModificationKind::HigherWalls:
        v.wall_height = mod_.wall_height;
        break;
      case ModificationKind::FloorTexture:
      case ModificationKind::HoverText:
        break;
    }
    inner_->set_render_variant(v);
    return inner_->reset(seed);
  }

  EnvStep step(const Action& action) override { return inner_->step(action); }
  bool supports(ModificationKind kind) const override { return inner_->supports(kind); }

 private:
  std::unique_ptr<Environment> inner_;
  EnvModification mod_;
};

}  // namespace

std::string_view to_string(ModificationKind kind) {
  switch (kind) {
    case ModificationKind::ColorPerturb: return "color_perturb";
    case ModificationKind::VerticalBars: return "vertical_bars";
    case ModificationKind::BackgroundBlob: return "background_blob";
    case ModificationKind::HigherWalls: return "higher_walls";
    case ModificationKind::FloorTexture: return "floor_texture";
    case ModificationKind::HoverText: return "hover_text";
  }
  return "unknown";
}

ModificationKind parse_modification(std::string_view name) {
  for (ModificationKind k : all_modifications())
    if (to_string(k) == name) return k;
  throw ConfigError("unknown modification '" + std::string(name) + "'");
}

const std::vector<ModificationKind>& all_modifications() {
  static const std::vector<ModificationKind> kinds = {
      ModificationKind::ColorPerturb, ModificationKind::VerticalBars,
      ModificationKind::BackgroundBlob, ModificationKind::HigherWalls,
      ModificationKind::FloorTexture, ModificationKind::HoverText};
  return kinds;
}

// ---- LaneRacer -----------------------------------------------------------------------

LaneRacer::LaneRacer(int observation_size, int max_steps) {
  spec_.name = "laneracer";
  spec_.observation_size = observation_size;
  spec_.action = ActionSpec::continuous({{-1.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}});
  spec_.max_steps = max_steps;
  spec_.solve_threshold = 900.0;
  spec_.min_score = -0.1 * max_steps;
}

bool LaneRacer::supports(ModificationKind kind) const {
  return kind == ModificationKind::ColorPerturb || kind == ModificationKind::VerticalBars ||
         kind == ModificationKind::BackgroundBlob;
}

LaneRacer::Track LaneRacer::generate_track(std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed({seed, 0x747261636bULL}));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::array<double, kCheckpoints> cx{}, cy{};
  for (int k = 0; k < kCheckpoints; ++k) {
    const double angle = 2 * kPi * (k + 0.6 * unit(rng)) / kCheckpoints;
    const double r = kTrackRadius * (0.55 + 0.45 * unit(rng));
    cx[k] = r * std::cos(angle);
    cy[k] = r * std::sin(angle);
  }
  // Dense closed Catmull-Rom curve through the checkpoints (increasing angle = CCW).
  constexpr int kSub = 40;
  std::vector<double> dx, dy;
  for (int k = 0; k < kCheckpoints; ++k) {
    const int i0 = (k + kCheckpoints - 1) % kCheckpoints, i1 = k, i2 = (k + 1) % kCheckpoints,
              i3 = (k + 2) % kCheckpoints;
    for (int s = 0; s < kSub; ++s) {
      const double t = static_cast<double>(s) / kSub;
      dx.push_back(catmull_rom(cx[i0], cx[i1], cx[i2], cx[i3], t));
      dy.push_back(catmull_rom(cy[i0], cy[i1], cy[i2], cy[i3], t));
    }
  }
  const std::size_t m = dx.size();
  std::vector<double> arc(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = (i + 1) % m;
    arc[i + 1] = arc[i] + std::hypot(dx[j] - dx[i], dy[j] - dy[i]);
  }
  const double length = arc[m];
  const auto n = static_cast<std::size_t>(std::max(8.0, std::round(length / kTileLength)));
  Track track;
  std::size_t seg = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double s = length * static_cast<double>(t) / static_cast<double>(n);
    while (arc[seg + 1] < s) ++seg;
    const double u = (s - arc[seg]) / (arc[seg + 1] - arc[seg]);
    const std::size_t j = (seg + 1) % m;
    track.x.push_back(dx[seg] + u * (dx[j] - dx[seg]));
    track.y.push_back(dy[seg] + u * (dy[j] - dy[seg]));
  }
  return track;
}

double LaneRacer::signed_area() const {
  double a = 0.0;
  const std::size_t n = track_.tiles();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    a += track_.x[i] * track_.y[j] - track_.x[j] * track_.y[i];
  }
  return 0.5 * a;
}

void LaneRacer::rasterize() {
  const double margin = track_.half_width + 2.0;
  const auto [xmin, xmax] = std::minmax_element(track_.x.begin(), track_.x.end());
  const auto [ymin, ymax] = std::minmax_element(track_.y.begin(), track_.y.end());
  raster_x0_ = *xmin - margin;
  raster_y0_ = *ymin - margin;
  raster_w_ = static_cast<int>(std::ceil((*xmax + margin - raster_x0_) / kCell));
  raster_h_ = static_cast<int>(std::ceil((*ymax + margin - raster_y0_) / kCell));
  raster_.assign(static_cast<std::size_t>(raster_w_) * raster_h_, -1);
  std::vector<double> best(raster_.size(), 1e300);
  const std::size_t n = track_.tiles();
  const double hw = track_.half_width;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    const double ax = track_.x[i], ay = track_.y[i], bx = track_.x[j], by = track_.y[j];
    const int gx0 = std::max(0, static_cast<int>((std::min(ax, bx) - hw - raster_x0_) / kCell));
    const int gx1 = std::min(raster_w_ - 1, static_cast<int>((std::max(ax, bx) + hw - raster_x0_) / kCell) + 1);
    const int gy0 = std::max(0, static_cast<int>((std::min(ay, by) - hw - raster_y0_) / kCell));
    const int gy1 = std::min(raster_h_ - 1, static_cast<int>((std::max(ay, by) + hw - raster_y0_) / kCell) + 1);
    for (int gy = gy0; gy <= gy1; ++gy)
      for (int gx = gx0; gx <= gx1; ++gx) {
        const double px = raster_x0_ + (gx + 0.5) * kCell, py = raster_y0_ + (gy + 0.5) * kCell;
        const double d = segment_distance(px, py, ax, ay, bx, by);
        const std::size_t cell = static_cast<std::size_t>(gy) * raster_w_ + gx;
        if (d <= hw && d < best[cell]) {
          best[cell] = d;
          raster_[cell] = static_cast<int>(i);
        }
      }
  }
}

int LaneRacer::tile_at(double x, double y) const {
  const int gx = static_cast<int>(std::floor((x - raster_x0_) / kCell));
  const int gy = static_cast<int>(std::floor((y - raster_y0_) / kCell));
  if (gx < 0 || gy < 0 || gx >= raster_w_ || gy >= raster_h_) return -1;
  return raster_[static_cast<std::size_t>(gy) * raster_w_ + gx];
}

Frame LaneRacer::reset(std::uint64_t seed) {
  track_ = generate_track(seed);
  rasterize();
  visited_.assign(track_.tiles(), false);
  visited_count_ = 0;
  car_x_ = track_.x[0];
  car_y_ = track_.y[0];
  heading_ = std::atan2(track_.y[1] - track_.y[0], track_.x[1] - track_.x[0]);
  speed_ = 0.0;
  steps_ = 0;
  active_ = true;
  return to_frame(render());
}

EnvStep LaneRacer::step(const Action& action) {
  if (!active_) throw ProtocolError("laneracer: step called without an active episode");
  if (action.values.size() != 3) throw ProtocolError("laneracer: expected 3 continuous actions");
  const double steer = std::clamp(action.values[0], -1.0, 1.0);
  const double gas = std::clamp(action.values[1], 0.0, 1.0);
  const double brake = std::clamp(action.values[2], 0.0, 1.0);

  const bool on_road = tile_at(car_x_, car_y_) >= 0;
  speed_ += kAccel * gas - kBrake * brake - (kDrag + (on_road ? 0.0 : kGrassDrag)) * speed_;
  speed_ = std::clamp(speed_, 0.0, kMaxSpeed);
  // Positive steer turns right (clockwise).
  heading_ -= steer * kTurnRate * std::min(1.0, speed_ / 0.8);
  car_x_ += speed_ * std::cos(heading_);
  car_y_ += speed_ * std::sin(heading_);
  ++steps_;

  double reward = -0.1;
  const int tile = tile_at(car_x_, car_y_);
  if (tile >= 0 && !visited_[static_cast<std::size_t>(tile)]) {
    visited_[static_cast<std::size_t>(tile)] = true;
    ++visited_count_;
    reward += 1000.0 / static_cast<double>(track_.tiles());
  }
  const bool done = steps_ >= spec_.max_steps || visited_count_ == track_.tiles();
  if (done) active_ = false;
  return {to_frame(render()), reward, done};
}

Image LaneRacer::render() const {
  const int side = spec_.observation_size;
  Image img(side, side);
  const double scale = side / 96.0;
  const int panel_top = static_cast<int>(std::lround(84 * scale));
  const double car_col = side / 2.0, car_row = 64 * scale;
  const double zoom = kZoom * scale;
  const double fx = std::cos(heading_), fy = std::sin(heading_);
  const double rx = std::sin(heading_), ry = -std::cos(heading_);
  const Rgb road = shift(kRoad, variant_.lane_offset);
  const Rgb grass = shift(kGrass, variant_.grass_offset);
  const Rgb grass_light = shift(kGrassLight, variant_.grass_offset);
  for (int py = 0; py < panel_top; ++py) {
    const double fwd = (car_row - (py + 0.5)) / zoom;
    for (int px = 0; px < side; ++px) {
      const double right = (px + 0.5 - car_col) / zoom;
      const double wx = car_x_ + fwd * fx + right * rx;
      const double wy = car_y_ + fwd * fy + right * ry;
      if (tile_at(wx, wy) >= 0) {
        put(img, py, px, road);
      } else {
        const long cell = static_cast<long>(std::floor(wx / 8.0)) + static_cast<long>(std::floor(wy / 8.0));
        put(img, py, px, (cell & 1) ? grass_light : grass);
      }
    }
  }
  // Car sprite, heading up the screen.
  fill_rect(img, static_cast<int>(car_row - 4 * scale), static_cast<int>(car_col - 2 * scale),
            static_cast<int>(car_row + 4 * scale), static_cast<int>(car_col + 2 * scale), kCar);
  // Indicator panel with a speed bar.
  fill_rect(img, panel_top, 0, side, side, {0, 0, 0});
  const int bar = static_cast<int>(std::lround(speed_ / kMaxSpeed * 40 * scale));
  fill_rect(img, panel_top + static_cast<int>(4 * scale), static_cast<int>(4 * scale),
            panel_top + static_cast<int>(8 * scale), static_cast<int>(4 * scale) + bar,
            {255, 255, 255});

  if (variant_.kind == ModificationKind::BackgroundBlob)
    fill_circle(img, 40 * scale, 70 * scale, variant_.blob_radius * scale, kBlob);
  if (variant_.kind == ModificationKind::VerticalBars) draw_vertical_bars(img, variant_.bar_fraction);
  return img;
}

// ---- Dodge ---------------------------------------------------------------------------

Dodge::Dodge(int observation_size, int max_steps) {
  spec_.name = "dodge";
  spec_.observation_size = observation_size;
  spec_.action = ActionSpec::discrete(3);
  spec_.max_steps = max_steps;
  spec_.solve_threshold = 750.0;
  spec_.min_score = 0.0;
}

bool Dodge::supports(ModificationKind kind) const {
  return kind == ModificationKind::HigherWalls || kind == ModificationKind::FloorTexture ||
         kind == ModificationKind::HoverText;
}

Frame Dodge::reset(std::uint64_t seed) {
  rng_.seed(mix_seed({seed, 0x646f646765ULL}));
  agent_x_ = 0.0;
  projectiles_.clear();
  steps_ = 0;
  active_ = true;
  return to_frame(render());
}

void Dodge::maybe_spawn() {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double ramp = std::min(1.0, steps_ / 1000.0);
  const double rate = 0.045 + 0.055 * ramp;
  if (unit(rng_) >= rate) return;
  Projectile p;
  p.origin = -kArenaHalfWidth + 2 * kArenaHalfWidth * unit(rng_);
  // Aimed at where the agent stands now, with a little spread.
  p.target = std::clamp(agent_x_ + 0.06 * (unit(rng_) - 0.5), -kArenaHalfWidth, kArenaHalfWidth);
  p.depth = 1.0;
  p.speed = 1.0 / (24.0 + 14.0 * unit(rng_));
  projectiles_.push_back(p);
}

EnvStep Dodge::step(const Action& action) {
  if (!active_) throw ProtocolError("dodge: step called without an active episode");
  if (action.index < 0 || action.index > 2) throw ProtocolError("dodge: action index must be 0, 1 or 2");
  if (action.index == Left) agent_x_ -= kMoveSpeed;
  if (action.index == Right) agent_x_ += kMoveSpeed;
  agent_x_ = std::clamp(agent_x_, -kArenaHalfWidth, kArenaHalfWidth);

  bool hit = false;
  for (auto& p : projectiles_) {
    p.depth -= p.speed;
    if (p.depth <= 0.0) {
      p.depth = 0.0;
      if (std::abs(p.target - agent_x_) < kHitRadius) hit = true;
    }
  }
  std::erase_if(projectiles_, [](const Projectile& p) { return p.depth <= 0.0; });
  ++steps_;
  if (!hit) maybe_spawn();
  const bool done = hit || steps_ >= spec_.max_steps;
  if (done) active_ = false;
  return {to_frame(render()), hit ? 0.0 : 1.0, done};
}

Image Dodge::render() const {
  const int side = spec_.observation_size;
  Image img(side, side);
  const double scale = side / 96.0;
  const int horizon = static_cast<int>(std::lround(kHorizon * side));
  const int panel_top = static_cast<int>(std::lround(kPanelTop * side));
  const int wall_band = static_cast<int>(std::lround(kWallBand * side * variant_.wall_height));
  const int wall_top = std::max(0, horizon - wall_band);
  const bool alt_floor = variant_.kind == ModificationKind::FloorTexture;
  // Lateral world units -> pixels at the horizon and at the near plane.
  const double far_px = 24.0 * scale, near_px = 44.0 * scale;

  fill_rect(img, 0, 0, wall_top, side, kCeiling);
  fill_rect(img, wall_top, 0, horizon, side, kWall);
  for (int y = horizon; y < panel_top; ++y) {
    const double t = static_cast<double>(y - horizon) / std::max(1, panel_top - horizon);
    const double px_per_unit = far_px + (near_px - far_px) * t;
    const int band = static_cast<int>(std::floor(std::sqrt(t) * 8.0));
    for (int x = 0; x < side; ++x) {
      const double world = agent_x_ + (x + 0.5 - side / 2.0) / px_per_unit;
      Rgb c;
      if (alt_floor) {
        const long col = static_cast<long>(std::floor(world * 4.0));
        c = ((col + band) & 1) ? kFloorAltA : kFloorAltB;
      } else {
        c = (band & 1) ? kFloorA : kFloorB;
      }
      put(img, y, x, c);
    }
  }
  // Side walls of the arena, drawn where the view extends past it.
  const double wall_at = kArenaHalfWidth + kHitRadius;
  for (int y = wall_top; y < panel_top; ++y) {
    const double t = y < horizon ? 0.0 : static_cast<double>(y - horizon) / std::max(1, panel_top - horizon);
    const double px_per_unit = far_px + (near_px - far_px) * t;
    const double left = side / 2.0 + (-wall_at - agent_x_) * px_per_unit;
    const double right = side / 2.0 + (wall_at - agent_x_) * px_per_unit;
    for (int x = 0; x < side; ++x)
      if (x + 0.5 < left || x + 0.5 > right) put(img, y, x, kWallDark);
  }
  // Projectiles: far ones are small and near the horizon.
  for (const auto& p : projectiles_) {
    const double near = 1.0 - p.depth;
    const double px_per_unit = far_px + (near_px - far_px) * near;
    const double cx = side / 2.0 + (p.lateral() - agent_x_) * px_per_unit;
    const double cy = horizon + near * (panel_top - horizon - 6 * scale);
    const double r = (1.2 + 5.0 * near) * scale;
    fill_circle(img, cy, cx, r, kFireOuter);
    fill_circle(img, cy, cx, 0.5 * r, kFireCore);
  }
  // Status panel; purely decorative.
  fill_rect(img, panel_top, 0, side, side, kPanel);
  const int ph = side - panel_top;
  fill_rect(img, panel_top + ph / 4, static_cast<int>(6 * scale), side - ph / 4,
            static_cast<int>(18 * scale), {200, 30, 30});
  fill_rect(img, panel_top + ph / 4, static_cast<int>(40 * scale), side - ph / 4,
            static_cast<int>(56 * scale), {180, 180, 180});
  fill_rect(img, panel_top + ph / 4, static_cast<int>(78 * scale), side - ph / 4,
            static_cast<int>(90 * scale), {200, 160, 30});

  if (variant_.kind == ModificationKind::HoverText) {
    const int y0 = static_cast<int>(2 * scale), y1 = static_cast<int>(16 * scale);
    const int x0 = static_cast<int>(18 * scale), x1 = static_cast<int>(78 * scale);
    fill_rect(img, y0, x0, y1, x1, kHoverBox);
    // Block glyphs standing in for a caption.
    for (int g = 0; g < 6; ++g) {
      const int gx = x0 + static_cast<int>((4 + 9 * g) * scale);
      fill_rect(img, y0 + static_cast<int>(3 * scale), gx, y1 - static_cast<int>(3 * scale),
                gx + static_cast<int>(2 * scale), {255, 255, 255});
      fill_rect(img, y0 + static_cast<int>(3 * scale), gx, y0 + static_cast<int>(5 * scale),
                gx + static_cast<int>(6 * scale), {255, 255, 255});
    }
  }
  return img;
}

// ---- Free functions ------------------------------------------------------------------

std::unique_ptr<Environment> apply_modification(std::unique_ptr<Environment> env,
                                                const EnvModification& mod) {
  if (!env) throw ConfigError("apply_modification: null environment");
  if (!env->supports(mod.kind))
    throw ConfigError("modification " + std::string(to_string(mod.kind)) +
                      " is not compatible with environment " + env->spec().name);
  return std::make_unique<ModifiedEnvironment>(std::move(env), mod);
}

EnvFactory builtin_env(std::string_view name) {
  if (name == "laneracer") return [] { return std::make_unique<LaneRacer>(); };
  if (name == "dodge") return [] { return std::make_unique<Dodge>(); };
  throw ConfigError("unknown environment '" + std::string(name) + "' (expected laneracer or dodge)");
}

ScoreSummary summarize(std::vector<double> scores) {
  ScoreSummary s;
  s.scores = std::move(scores);
  if (s.scores.empty()) return s;
  double sum = 0.0;
  for (double v : s.scores) sum += v;
  s.mean = sum / static_cast<double>(s.scores.size());
  double var = 0.0;
  for (double v : s.scores) var += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(var / static_cast<double>(s.scores.size()));
  return s;
}

ScoreSummary random_baseline(const EnvFactory& factory, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("random_baseline: episodes must be >= 1");
  std::vector<double> scores(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    auto env = factory();
    const ActionSpec& spec = env->spec().action;
    const std::uint64_t episode_seed =
        rollout_seed(seed, SeedDomain::Baseline, 0, 0, static_cast<std::uint64_t>(e));
    std::mt19937_64 rng(mix_seed({episode_seed, 0x706f6c696379ULL}));
    env->reset(episode_seed);
    double total = 0.0;
    for (bool done = false; !done;) {
      Action a;
      if (spec.kind == ActionKind::Discrete) {
        a.index = static_cast<int>(std::uniform_int_distribution<std::size_t>(0, spec.dim - 1)(rng));
      } else {
        for (const auto& b : spec.bounds)
          a.values.push_back(std::uniform_real_distribution<double>(b.lo, b.hi)(rng));
      }
      const EnvStep s = env->step(a);
      total += s.reward;
      done = s.done;
    }
    scores[static_cast<std::size_t>(e)] = total;
  }
  return summarize(std::move(scores));
}

}  // namespace attnes
