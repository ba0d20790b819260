#include "pedintent/data_model.hpp"

#include <cmath>

#include "pedintent/errors.hpp"

namespace pedintent {

void BoundingBox::validate() const {
  for (double v : {x_tl, y_tl, x_br, y_br}) {
    if (!std::isfinite(v)) throw IntegrityError("bounding box has a non-finite coordinate");
    if (v < 0) throw IntegrityError("bounding box has a negative coordinate");
  }
  if (x_tl > x_br || y_tl > y_br) throw IntegrityError("bounding box corners are inverted");
}

namespace {
constexpr std::array<std::string_view, kSpeedCategories> kSpeedNames = {
    "stopped", "moving_slow", "moving_fast", "decelerating", "accelerating"};
constexpr std::array<std::string_view, 4> kChannelNames = {"bbox", "center", "pose", "speed"};
constexpr std::array<std::string_view, 3> kVisualNames = {"local_context", "local_surround", "global_context"};
}  // namespace

std::string_view to_string(SpeedCategory speed) { return kSpeedNames[static_cast<std::size_t>(speed)]; }

SpeedCategory parse_speed(std::string_view name) {
  for (std::size_t i = 0; i < kSpeedNames.size(); ++i)
    if (kSpeedNames[i] == name) return static_cast<SpeedCategory>(i);
  throw DataError("unknown speed category '" + std::string(name) + "'");
}

std::array<float, kSpeedCategories> one_hot(SpeedCategory speed) {
  std::array<float, kSpeedCategories> v{};
  v[static_cast<std::size_t>(speed)] = 1.0f;
  return v;
}

Frame::Frame(std::size_t h, std::size_t w, std::vector<std::uint8_t> pixels)
    : height(h), width(w), rgb(std::move(pixels)) {
  if (rgb.size() != 3 * h * w) throw DataError("frame payload does not match 3 x height x width");
}

Frame Frame::filled(std::size_t h, std::size_t w, std::array<std::uint8_t, 3> color) {
  std::vector<std::uint8_t> px(3 * h * w);
  for (std::size_t i = 0; i < h * w; ++i)
    for (std::size_t c = 0; c < 3; ++c) px[3 * i + c] = color[c];
  return Frame(h, w, std::move(px));
}

void PedestrianTrack::validate() const {
  if (pedestrian_id.empty()) throw IntegrityError("track without pedestrian id");
  if (label != 0 && label != 1) throw IntegrityError("track " + pedestrian_id + ": label must be 0 or 1");
  for (std::size_t i = 0; i < records.size(); ++i) {
    records[i].bbox.validate();
    if (i > 0 && records[i].frame_index <= records[i - 1].frame_index) {
      throw IntegrityError("track " + pedestrian_id + ": frame indices are not strictly increasing");
    }
  }
}

void Clip::append(const Image& image) {
  if (frames == 0) {
    height = image.height;
    width = image.width;
  } else if (image.height != height || image.width != width) {
    throw DimensionError("clip frames must share one size");
  }
  pixels.insert(pixels.end(), image.pixels.begin(), image.pixels.end());
  ++frames;
}

std::size_t channel_width(NonVisualChannel channel) {
  switch (channel) {
    case NonVisualChannel::kBbox: return 4;
    case NonVisualChannel::kCenter: return 2;
    case NonVisualChannel::kPose: return PoseKeypoints::kValues;
    case NonVisualChannel::kSpeed: return kSpeedCategories;
  }
  return 0;
}

std::string_view to_string(NonVisualChannel channel) { return kChannelNames[static_cast<std::size_t>(channel)]; }

NonVisualChannel parse_channel(std::string_view name) {
  for (std::size_t i = 0; i < kChannelNames.size(); ++i)
    if (kChannelNames[i] == name) return static_cast<NonVisualChannel>(i);
  throw ConfigError("unknown non-visual channel '" + std::string(name) + "'");
}

std::string_view to_string(VisualInput input) { return kVisualNames[static_cast<std::size_t>(input)]; }

VisualInput parse_visual_input(std::string_view name) {
  for (std::size_t i = 0; i < kVisualNames.size(); ++i)
    if (kVisualNames[i] == name) return static_cast<VisualInput>(i);
  throw ConfigError("unknown visual input '" + std::string(name) + "'");
}

const FeatureMatrix& ObservationWindow::channel(NonVisualChannel c) const {
  switch (c) {
    case NonVisualChannel::kBbox: return bbox_delta;
    case NonVisualChannel::kCenter: return center_delta;
    case NonVisualChannel::kPose: return pose;
    case NonVisualChannel::kSpeed: return speed;
  }
  return bbox_delta;
}

const std::optional<Clip>& ObservationWindow::clip(VisualInput input) const {
  switch (input) {
    case VisualInput::kLocalContext: return local_context;
    case VisualInput::kLocalSurround: return local_surround;
    case VisualInput::kGlobalContext: return global_context;
  }
  return local_context;
}

std::optional<Clip>& ObservationWindow::clip(VisualInput input) {
  return const_cast<std::optional<Clip>&>(std::as_const(*this).clip(input));
}

}  // namespace pedintent
