#pragma once

// File formats for tracks and frames.
//
// Annotations: UTF-8 JSON Lines, one record per (pedestrian, frame):
//   {"pid": str, "frame": int, "bbox": [4], "center": [2], "pose": [36],
//    "speed": str, "event_frame": int, "label": 0|1}
// Frames ("PVF1"): magic | u32 height | u32 width | u32 frame_count | RGB8
// payload, little-endian, row-major, frames consecutive.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "pedintent/data_model.hpp"

namespace pedintent {

// Tracks grouped by pid in order of first appearance. Within a pid, frames
// must appear in strictly increasing order.
std::vector<PedestrianTrack> parse_annotations(std::istream& in);
std::vector<PedestrianTrack> load_annotations(const std::filesystem::path& path);

void write_annotations(std::ostream& out, const std::vector<PedestrianTrack>& tracks);
void save_annotations(const std::filesystem::path& path, const std::vector<PedestrianTrack>& tracks);

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual std::size_t frame_count() const = 0;
  virtual std::size_t height() const = 0;
  virtual std::size_t width() const = 0;
  // Throws DataError for an index outside [0, frame_count).
  virtual Frame frame(std::int64_t index) const = 0;
};

// All frames held in memory, as read from a PVF1 container.
class FrameStore final : public FrameSource {
 public:
  FrameStore(std::size_t height, std::size_t width, std::vector<std::uint8_t> payload);

  std::size_t frame_count() const override { return count_; }
  std::size_t height() const override { return height_; }
  std::size_t width() const override { return width_; }
  Frame frame(std::int64_t index) const override;

 private:
  std::size_t height_, width_, count_;
  std::vector<std::uint8_t> payload_;
};

FrameStore read_frames(std::istream& in);
FrameStore load_frames(const std::filesystem::path& path);
void write_frames(std::ostream& out, const FrameSource& frames);
void save_frames(const std::filesystem::path& path, const FrameSource& frames);

}  // namespace pedintent
