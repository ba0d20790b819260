#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pedintent/data_model.hpp"

namespace pedintent::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Track with `length` consecutive frames starting at `first`; the box moves
// one pixel right per frame.
PedestrianTrack make_track(const std::string& pid, std::int64_t first, std::size_t length, std::int64_t event_frame,
                           int label = 0);

std::string read_text(const std::filesystem::path& path);

}  // namespace pedintent::testing
