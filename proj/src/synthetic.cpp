#include "pedintent/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "pedintent/errors.hpp"

namespace pedintent {

namespace {

constexpr std::array<std::uint8_t, 3> kBackground = {110, 120, 110};
constexpr std::array<std::uint8_t, 3> kWarm = {200, 50, 50};
constexpr std::array<std::uint8_t, 3> kCool = {50, 50, 200};

// Stick-figure joint positions as fractions of the box.
constexpr std::array<std::array<double, 2>, PoseKeypoints::kJoints> kJointTemplate = {{
    {0.50, 0.08}, {0.50, 0.20}, {0.25, 0.22}, {0.15, 0.38}, {0.10, 0.52}, {0.75, 0.22},
    {0.85, 0.38}, {0.90, 0.52}, {0.35, 0.55}, {0.30, 0.75}, {0.30, 0.95}, {0.65, 0.55},
    {0.70, 0.75}, {0.70, 0.95}, {0.45, 0.06}, {0.55, 0.06}, {0.40, 0.08}, {0.60, 0.08},
}};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Uniform double in [0, 1) from the top 53 bits; independent of library
// distribution implementations.
double unit(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

// Coordinates live on a 1/256 px grid so sums and differences stay exact.
double quantize(double v) { return std::round(v * 256.0) / 256.0; }

std::uint8_t jitter_channel(std::uint8_t base, std::mt19937_64& rng) {
  return static_cast<std::uint8_t>(std::clamp(int(base) + int(uniform(rng, -20, 20)), 0, 255));
}

}  // namespace

LabelRule parse_rule(std::string_view name) {
  if (name == "separable_motion") return LabelRule::kSeparableMotion;
  if (name == "separable_visual") return LabelRule::kSeparableVisual;
  if (name == "random") return LabelRule::kRandom;
  throw ConfigError("unknown rule '" + std::string(name) + "' (separable_motion|separable_visual|random)");
}

std::string_view to_string(LabelRule rule) {
  switch (rule) {
    case LabelRule::kSeparableMotion: return "separable_motion";
    case LabelRule::kSeparableVisual: return "separable_visual";
    case LabelRule::kRandom: return "random";
  }
  return "";
}

SyntheticRenderer::SyntheticRenderer(const SyntheticConfig& cfg, std::vector<PedestrianTrack> tracks,
                                     std::vector<std::array<std::uint8_t, 3>> colors)
    : height_(cfg.frame_height),
      width_(cfg.frame_width),
      track_frames_(cfg.track_frames),
      tracks_(std::move(tracks)),
      colors_(std::move(colors)) {}

Frame SyntheticRenderer::frame(std::int64_t index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= frame_count()) {
    throw DataError("synthetic frame " + std::to_string(index) + " out of range");
  }
  const auto k = static_cast<std::size_t>(index) / track_frames_;
  const auto& rec = tracks_[k].records[static_cast<std::size_t>(index) % track_frames_];
  Frame f = Frame::filled(height_, width_, kBackground);
  const auto lo = [](double v) { return static_cast<std::size_t>(std::max(0.0, std::ceil(v))); };
  const std::size_t c1 = std::min(width_, lo(rec.bbox.x_br)), r1 = std::min(height_, lo(rec.bbox.y_br));
  for (std::size_t r = lo(rec.bbox.y_tl); r < r1; ++r)
    for (std::size_t c = lo(rec.bbox.x_tl); c < c1; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) f.at(r, c, ch) = colors_[k][ch];
  return f;
}

SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.track_frames < 2) throw ConfigError("synthetic tracks need at least two frames");
  if (cfg.frame_height < 8 || cfg.frame_width < 8) throw ConfigError("synthetic frames must be at least 8x8");
  const double sx = double(cfg.frame_width) / 32.0, sy = double(cfg.frame_height) / 32.0;
  std::vector<PedestrianTrack> tracks;
  std::vector<std::array<std::uint8_t, 3>> colors;
  for (std::size_t i = 0; i < cfg.n_tracks; ++i) {
    std::mt19937_64 rng(splitmix64(cfg.seed ^ splitmix64(i)));
    PedestrianTrack t;
    char pid[32];
    std::snprintf(pid, sizeof pid, "ped_%05zu", i);
    t.pedestrian_id = pid;
    t.label = unit(rng) < cfg.positive_rate ? 1 : 0;

    const double box_w = uniform(rng, 3.5, 4.5) * sx, box_h = uniform(rng, 9.0, 11.0) * sy;
    const double x0 = uniform(rng, 10.0, 16.0) * sx, y0 = uniform(rng, 12.0, 16.0) * sy;
    const double speed = uniform(rng, 0.08, 0.2) * sx;
    const bool rightwards = cfg.rule == LabelRule::kSeparableMotion ? t.label == 1 : unit(rng) < 0.5;
    const double vx = rightwards ? speed : -speed;
    const double vy = uniform(rng, -0.03, 0.03) * sy;
    const auto category = static_cast<SpeedCategory>(static_cast<std::size_t>(unit(rng) * kSpeedCategories));
    const bool warm = cfg.rule == LabelRule::kSeparableVisual ? t.label == 1 : unit(rng) < 0.5;
    std::array<std::uint8_t, 3> color{};
    for (std::size_t ch = 0; ch < 3; ++ch) color[ch] = jitter_channel((warm ? kWarm : kCool)[ch], rng);

    const auto start = static_cast<std::int64_t>(i * cfg.track_frames);
    for (std::size_t f = 0; f < cfg.track_frames; ++f) {
      const double jx = uniform(rng, -0.05, 0.05) * sx, jy = uniform(rng, -0.05, 0.05) * sy;
      TrackRecord r;
      r.frame_index = start + static_cast<std::int64_t>(f);
      const double left = std::max(0.0, quantize(x0 + vx * double(f) + jx));
      const double top = std::max(0.0, quantize(y0 + vy * double(f) + jy));
      r.bbox = {left, top, quantize(left + box_w), quantize(top + box_h)};
      r.center = Center::of(r.bbox);
      for (std::size_t j = 0; j < PoseKeypoints::kJoints; ++j) {
        const bool missing = unit(rng) < 0.05;
        const double nx = uniform(rng, -0.05, 0.05) * box_w, ny = uniform(rng, -0.05, 0.05) * box_h;
        if (missing) continue;
        r.pose.coords[2 * j] = std::max(0.0, quantize(left + kJointTemplate[j][0] * box_w + nx));
        r.pose.coords[2 * j + 1] = std::max(0.0, quantize(top + kJointTemplate[j][1] * box_h + ny));
      }
      r.speed = category;
      t.records.push_back(r);
    }
    t.event_frame = t.records.back().frame_index + cfg.event_offset;
    tracks.push_back(std::move(t));
    colors.push_back(color);
  }
  auto renderer = std::make_shared<const SyntheticRenderer>(cfg, tracks, std::move(colors));
  return {std::move(tracks), std::move(renderer)};
}

std::vector<ObservationWindow> synthetic_windows(const SyntheticConfig& cfg, const WindowConfig& wcfg,
                                                 const ClipConfig& ccfg) {
  auto data = generate_synthetic(cfg);
  return build_windows(data.tracks, wcfg, data.frames.get(), ccfg);
}

}  // namespace pedintent
