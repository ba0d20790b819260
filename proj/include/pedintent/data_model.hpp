#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pedintent {

// Pixel coordinates, top-left / bottom-right corners.
struct BoundingBox {
  double x_tl = 0, y_tl = 0, x_br = 0, y_br = 0;

  void validate() const;  // throws IntegrityError
  double width() const { return x_br - x_tl; }
  double height() const { return y_br - y_tl; }
  bool operator==(const BoundingBox&) const = default;
};

struct Center {
  double x = 0, y = 0;

  static Center of(const BoundingBox& b) { return {(b.x_tl + b.x_br) / 2, (b.y_tl + b.y_br) / 2}; }
  bool operator==(const Center&) const = default;
};

// 18 joints as interleaved (x, y) pixel coordinates; a missing joint is (0, 0).
struct PoseKeypoints {
  static constexpr std::size_t kJoints = 18;
  static constexpr std::size_t kValues = 2 * kJoints;
  std::array<double, kValues> coords{};

  bool operator==(const PoseKeypoints&) const = default;
};

enum class SpeedCategory { kStopped, kMovingSlow, kMovingFast, kDecelerating, kAccelerating };

inline constexpr std::size_t kSpeedCategories = 5;

std::string_view to_string(SpeedCategory speed);
// Throws DataError for an unknown name.
SpeedCategory parse_speed(std::string_view name);
std::array<float, kSpeedCategories> one_hot(SpeedCategory speed);

// 8-bit RGB, row-major, channels interleaved.
struct Frame {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> rgb;

  Frame() = default;
  Frame(std::size_t h, std::size_t w, std::vector<std::uint8_t> pixels);
  static Frame filled(std::size_t h, std::size_t w, std::array<std::uint8_t, 3> color);

  std::uint8_t at(std::size_t row, std::size_t col, std::size_t channel) const {
    return rgb[(row * width + col) * 3 + channel];
  }
  std::uint8_t& at(std::size_t row, std::size_t col, std::size_t channel) {
    return rgb[(row * width + col) * 3 + channel];
  }
};

struct TrackRecord {
  std::int64_t frame_index = 0;
  BoundingBox bbox;
  Center center;
  PoseKeypoints pose;
  SpeedCategory speed = SpeedCategory::kStopped;

  bool operator==(const TrackRecord&) const = default;
};

struct PedestrianTrack {
  std::string pedestrian_id;
  std::vector<TrackRecord> records;  // strictly increasing frame_index
  std::int64_t event_frame = 0;
  int label = 0;

  void validate() const;  // throws IntegrityError
  bool operator==(const PedestrianTrack&) const = default;
};

// Float image in [0, 1], row-major H x W x 3.
struct Image {
  std::size_t height = 0, width = 0;
  std::vector<float> pixels;

  float at(std::size_t row, std::size_t col, std::size_t channel) const {
    return pixels[(row * width + col) * 3 + channel];
  }
};

// frames x H x W x 3, values in [0, 1].
struct Clip {
  std::size_t frames = 0, height = 0, width = 0;
  std::vector<float> pixels;

  void append(const Image& image);
};

enum class NonVisualChannel { kBbox, kCenter, kPose, kSpeed };
inline constexpr std::array<NonVisualChannel, 4> kAllNonVisualChannels = {
    NonVisualChannel::kBbox, NonVisualChannel::kCenter, NonVisualChannel::kPose, NonVisualChannel::kSpeed};

std::size_t channel_width(NonVisualChannel channel);
std::string_view to_string(NonVisualChannel channel);
NonVisualChannel parse_channel(std::string_view name);  // throws ConfigError

enum class VisualInput { kLocalContext, kLocalSurround, kGlobalContext };
inline constexpr std::array<VisualInput, 3> kAllVisualInputs = {
    VisualInput::kLocalContext, VisualInput::kLocalSurround, VisualInput::kGlobalContext};

std::string_view to_string(VisualInput input);
VisualInput parse_visual_input(std::string_view name);  // throws ConfigError

// Row-major float matrix.
struct FeatureMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<float> values;

  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

// One sample. Non-visual channels hold T = obs_len - 1 aligned rows; clips
// hold all obs_len raw frames.
struct ObservationWindow {
  std::string pedestrian_id;
  std::int64_t last_frame = 0;
  int time_to_event = 0;
  int label = 0;

  FeatureMatrix bbox_delta;    // T x 4
  FeatureMatrix center_delta;  // T x 2
  FeatureMatrix pose;          // T x 36
  FeatureMatrix speed;         // T x 5 one-hot

  std::optional<Clip> local_context;
  std::optional<Clip> local_surround;
  std::optional<Clip> global_context;

  std::size_t steps() const { return bbox_delta.rows; }
  const FeatureMatrix& channel(NonVisualChannel c) const;
  const std::optional<Clip>& clip(VisualInput input) const;
  std::optional<Clip>& clip(VisualInput input);
};

}  // namespace pedintent
