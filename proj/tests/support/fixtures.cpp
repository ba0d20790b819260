#include "support/fixtures.hpp"

#include <fstream>
#include <random>
#include <sstream>

namespace pedintent::testing {

TempDir::TempDir() {
  std::random_device rd;
  const auto base = std::filesystem::temp_directory_path();
  for (;;) {
    path_ = base / ("pedintent-test-" + std::to_string(rd()));
    if (std::filesystem::create_directory(path_)) break;
  }
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

PedestrianTrack make_track(const std::string& pid, std::int64_t first, std::size_t length, std::int64_t event_frame,
                           int label) {
  PedestrianTrack t;
  t.pedestrian_id = pid;
  t.event_frame = event_frame;
  t.label = label;
  for (std::size_t i = 0; i < length; ++i) {
    TrackRecord r;
    r.frame_index = first + static_cast<std::int64_t>(i);
    const double x = 10.0 + double(i);
    r.bbox = {x, 20.0, x + 4.0, 30.0};
    r.center = Center::of(r.bbox);
    for (std::size_t j = 0; j < PoseKeypoints::kValues; ++j) r.pose.coords[j] = double(j) + double(i);
    r.speed = static_cast<SpeedCategory>(i % kSpeedCategories);
    t.records.push_back(r);
  }
  return t;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace pedintent::testing
