#pragma once

// Desk-scale stand-in for annotated driving footage: pedestrians drawn as
// filled rectangles on a flat background, with tracks laid out back to back
// on one global frame timeline.

#include <array>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

#include "pedintent/annotations.hpp"
#include "pedintent/data_model.hpp"
#include "pedintent/preprocess.hpp"

namespace pedintent {

enum class LabelRule {
  // Label 1 iff the pedestrian drifts right (towards the road); nothing else
  // carries label information.
  kSeparableMotion,
  // Label only in the rectangle's color; trajectories, pose and speed are
  // drawn independently of it.
  kSeparableVisual,
  kRandom,
};

LabelRule parse_rule(std::string_view name);  // throws ConfigError
std::string_view to_string(LabelRule rule);

struct SyntheticConfig {
  std::uint64_t seed = 0;
  std::size_t n_tracks = 100;
  LabelRule rule = LabelRule::kSeparableMotion;
  std::size_t track_frames = 46;  // obs_len + (tte_hi - tte_lo) covers every default window
  std::size_t frame_height = 32;
  std::size_t frame_width = 32;
  std::int64_t event_offset = 30;  // event_frame - last track frame
  double positive_rate = 0.5;
};

// Renders frames on demand from the generated tracks.
class SyntheticRenderer final : public FrameSource {
 public:
  SyntheticRenderer(const SyntheticConfig& cfg, std::vector<PedestrianTrack> tracks,
                    std::vector<std::array<std::uint8_t, 3>> colors);

  std::size_t frame_count() const override { return tracks_.size() * track_frames_; }
  std::size_t height() const override { return height_; }
  std::size_t width() const override { return width_; }
  Frame frame(std::int64_t index) const override;

 private:
  std::size_t height_, width_, track_frames_;
  std::vector<PedestrianTrack> tracks_;
  std::vector<std::array<std::uint8_t, 3>> colors_;
};

struct SyntheticDataset {
  std::vector<PedestrianTrack> tracks;
  std::shared_ptr<const SyntheticRenderer> frames;
};

// Deterministic in cfg; track i depends only on (seed, i).
SyntheticDataset generate_synthetic(const SyntheticConfig& cfg);

// generate_synthetic followed by build_windows over every track.
std::vector<ObservationWindow> synthetic_windows(const SyntheticConfig& cfg, const WindowConfig& wcfg,
                                                 const ClipConfig& ccfg = {});

}  // namespace pedintent
