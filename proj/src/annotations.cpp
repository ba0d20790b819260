#include "pedintent/annotations.hpp"

#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

#include "pedintent/errors.hpp"

namespace pedintent {

namespace {

using nlohmann::json;

template <std::size_t N>
std::array<double, N> number_array(const json& rec, const char* field, std::size_t line) {
  if (!rec.contains(field) || !rec[field].is_array()) {
    throw ParseError(std::string("missing array field '") + field + "'", line);
  }
  const auto& arr = rec[field];
  if (arr.size() != N) {
    throw ParseError(std::string("field '") + field + "' needs " + std::to_string(N) + " numbers, got " +
                         std::to_string(arr.size()),
                     line);
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!arr[i].is_number()) throw ParseError(std::string("field '") + field + "' holds a non-number", line);
    out[i] = arr[i].get<double>();
  }
  return out;
}

template <typename T>
T scalar_field(const json& rec, const char* field, std::size_t line) {
  if (!rec.contains(field)) throw ParseError(std::string("missing field '") + field + "'", line);
  try {
    return rec[field].get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string("field '") + field + "' has the wrong type", line);
  }
}

std::vector<std::uint8_t> read_all(std::istream& in) {
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t le32(const std::vector<std::uint8_t>& b, std::size_t pos) {
  return std::uint32_t(b[pos]) | std::uint32_t(b[pos + 1]) << 8 | std::uint32_t(b[pos + 2]) << 16 |
         std::uint32_t(b[pos + 3]) << 24;
}

void put32(std::ostream& out, std::size_t v) {
  const char bytes[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

}  // namespace

std::vector<PedestrianTrack> parse_annotations(std::istream& in) {
  std::vector<PedestrianTrack> tracks;
  std::map<std::string, std::size_t> index;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line);
    }
    if (!rec.is_object()) throw ParseError("record is not a JSON object", line);

    const auto pid = scalar_field<std::string>(rec, "pid", line);
    TrackRecord r;
    r.frame_index = scalar_field<std::int64_t>(rec, "frame", line);
    const auto box = number_array<4>(rec, "bbox", line);
    r.bbox = {box[0], box[1], box[2], box[3]};
    const auto c = number_array<2>(rec, "center", line);
    r.center = {c[0], c[1]};
    r.pose.coords = number_array<PoseKeypoints::kValues>(rec, "pose", line);
    try {
      r.speed = parse_speed(scalar_field<std::string>(rec, "speed", line));
      r.bbox.validate();
    } catch (const DataError& e) {
      throw ParseError(e.what(), line);
    }
    const auto event = scalar_field<std::int64_t>(rec, "event_frame", line);
    const auto label = scalar_field<int>(rec, "label", line);
    if (label != 0 && label != 1) throw ParseError("field 'label' must be 0 or 1", line);

    auto [it, inserted] = index.try_emplace(pid, tracks.size());
    if (inserted) {
      PedestrianTrack t;
      t.pedestrian_id = pid;
      t.event_frame = event;
      t.label = label;
      tracks.push_back(std::move(t));
    }
    auto& track = tracks[it->second];
    if (track.event_frame != event || track.label != label) {
      throw IntegrityError("line " + std::to_string(line) + ": pid " + pid +
                           " changes event_frame or label mid-track");
    }
    if (!track.records.empty() && r.frame_index <= track.records.back().frame_index) {
      throw IntegrityError("line " + std::to_string(line) + ": pid " + pid + " frame " +
                           std::to_string(r.frame_index) + " is not after frame " +
                           std::to_string(track.records.back().frame_index));
    }
    track.records.push_back(r);
  }
  return tracks;
}

std::vector<PedestrianTrack> load_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotations " + path.string());
  return parse_annotations(in);
}

void write_annotations(std::ostream& out, const std::vector<PedestrianTrack>& tracks) {
  for (const auto& t : tracks) {
    t.validate();
    for (const auto& r : t.records) {
      json rec;
      rec["pid"] = t.pedestrian_id;
      rec["frame"] = r.frame_index;
      rec["bbox"] = {r.bbox.x_tl, r.bbox.y_tl, r.bbox.x_br, r.bbox.y_br};
      rec["center"] = {r.center.x, r.center.y};
      rec["pose"] = r.pose.coords;
      rec["speed"] = std::string(to_string(r.speed));
      rec["event_frame"] = t.event_frame;
      rec["label"] = t.label;
      out << rec.dump() << '\n';
    }
  }
}

void save_annotations(const std::filesystem::path& path, const std::vector<PedestrianTrack>& tracks) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_annotations(out, tracks);
}

FrameStore::FrameStore(std::size_t height, std::size_t width, std::vector<std::uint8_t> payload)
    : height_(height), width_(width), payload_(std::move(payload)) {
  const std::size_t per = 3 * height * width;
  if (per == 0 || payload_.size() % per != 0) throw DataError("frame payload is not a whole number of frames");
  count_ = payload_.size() / per;
}

Frame FrameStore::frame(std::int64_t index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= count_) {
    throw DataError("frame " + std::to_string(index) + " outside container of " + std::to_string(count_));
  }
  const std::size_t per = 3 * height_ * width_;
  const auto first = payload_.begin() + static_cast<std::ptrdiff_t>(per * static_cast<std::size_t>(index));
  return Frame(height_, width_, std::vector<std::uint8_t>(first, first + static_cast<std::ptrdiff_t>(per)));
}

FrameStore read_frames(std::istream& in) {
  auto bytes = read_all(in);
  if (bytes.size() < 16 || std::string(bytes.begin(), bytes.begin() + 4) != "PVF1") {
    throw DataError("not a PVF1 frame container");
  }
  const std::size_t h = le32(bytes, 4), w = le32(bytes, 8), n = le32(bytes, 12);
  if (bytes.size() - 16 != n * h * w * 3) throw DataError("PVF1 payload length disagrees with its header");
  bytes.erase(bytes.begin(), bytes.begin() + 16);
  if (n == 0) return FrameStore(h, w, {});
  return FrameStore(h, w, std::move(bytes));
}

FrameStore load_frames(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open frames " + path.string());
  return read_frames(in);
}

void write_frames(std::ostream& out, const FrameSource& frames) {
  out.write("PVF1", 4);
  put32(out, frames.height());
  put32(out, frames.width());
  put32(out, frames.frame_count());
  for (std::size_t i = 0; i < frames.frame_count(); ++i) {
    const Frame f = frames.frame(static_cast<std::int64_t>(i));
    out.write(reinterpret_cast<const char*>(f.rgb.data()), static_cast<std::streamsize>(f.rgb.size()));
  }
}

void save_frames(const std::filesystem::path& path, const FrameSource& frames) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_frames(out, frames);
}

}  // namespace pedintent
