#include "pedintent/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pedintent/errors.hpp"

namespace pedintent {

std::vector<std::vector<double>> delta_encode(const std::vector<std::vector<double>>& seq) {
  if (seq.size() < 2) throw WindowError("delta encoding needs at least two frames");
  const auto& ref = seq.front();
  std::vector<std::vector<double>> out;
  out.reserve(seq.size() - 1);
  for (std::size_t j = 1; j < seq.size(); ++j) {
    if (seq[j].size() != ref.size()) throw WindowError("delta encoding: frames differ in width");
    std::vector<double> d(ref.size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = seq[j][k] - ref[k];
    out.push_back(std::move(d));
  }
  return out;
}

namespace {

double lerp(double a, double b, double t) { return a + t * (b - a); }

// Bilinear sample at continuous pixel-index coordinates; 0 outside the frame.
double sample(const Frame& f, double y, double x, std::size_t ch) {
  const double max_y = double(f.height) - 1, max_x = double(f.width) - 1;
  if (!(y >= 0 && y <= max_y && x >= 0 && x <= max_x)) return 0.0;
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, f.height - 1), x1 = std::min(x0 + 1, f.width - 1);
  const double ty = y - double(y0), tx = x - double(x0);
  const double top = lerp(f.at(y0, x0, ch), f.at(y0, x1, ch), tx);
  const double bottom = lerp(f.at(y1, x0, ch), f.at(y1, x1, ch), tx);
  return lerp(top, bottom, ty);
}

// Resamples the half-open pixel region [x0, x1) x [y0, y1): output sample j
// sits at x0 + j * (x1 - 1 - x0) / (W - 1), so the first and last samples land
// on the region's first and last pixel centers.
Image resample_region(const Frame& f, double x0, double y0, double x1, double y1, ImageSize size) {
  if (size.height == 0 || size.width == 0) throw ConfigError("output image size must be positive");
  auto positions = [](double lo, double hi, std::size_t n) {
    std::vector<double> p(n);
    if (n == 1) {
      p[0] = (lo + hi - 1) / 2;
      return p;
    }
    const double step = (hi - 1 - lo) / double(n - 1);
    for (std::size_t i = 0; i < n; ++i) p[i] = lo + double(i) * step;
    return p;
  };
  const auto ys = positions(y0, y1, size.height);
  const auto xs = positions(x0, x1, size.width);
  Image img{size.height, size.width, std::vector<float>(size.height * size.width * 3)};
  for (std::size_t r = 0; r < size.height; ++r)
    for (std::size_t c = 0; c < size.width; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch)
        img.pixels[(r * size.width + c) * 3 + ch] = static_cast<float>(sample(f, ys[r], xs[c], ch) / 255.0);
  return img;
}

void check_frame(const Frame& f) {
  if (f.height == 0 || f.width == 0 || f.rgb.size() != 3 * f.height * f.width) {
    throw DataError("invalid frame");
  }
}

}  // namespace

Image build_local_context(const Frame& frame, const BoundingBox& bbox, double ratio, ImageSize size) {
  check_frame(frame);
  if (!(ratio >= 1.0)) throw ConfigError("enlargement ratio must be >= 1");
  const double cx = (bbox.x_tl + bbox.x_br) / 2, cy = (bbox.y_tl + bbox.y_br) / 2;
  const double hw = ratio * bbox.width() / 2, hh = ratio * bbox.height() / 2;
  const double x0 = cx - hw, x1 = cx + hw, y0 = cy - hh, y1 = cy + hh;
  const double clipped_w = std::min(x1, double(frame.width)) - std::max(x0, 0.0);
  const double clipped_h = std::min(y1, double(frame.height)) - std::max(y0, 0.0);
  if (!(clipped_w > 0 && clipped_h > 0)) throw DegenerateCropError("crop region is empty after clipping to the frame");
  return resample_region(frame, x0, y0, x1, y1, size);
}

Image build_local_surround(const Frame& frame, const BoundingBox& bbox, double ratio, ImageSize size) {
  check_frame(frame);
  Frame masked = frame;
  const auto lo = [](double v) { return static_cast<std::size_t>(std::max(0.0, std::ceil(v))); };
  const std::size_t c0 = lo(bbox.x_tl), r0 = lo(bbox.y_tl);
  // Pixel index k is inside when tl <= k < br.
  const std::size_t c1 = std::min(frame.width, lo(bbox.x_br)), r1 = std::min(frame.height, lo(bbox.y_br));
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) masked.at(r, c, ch) = kSurroundGrey;
  return build_local_context(masked, bbox, ratio, size);
}

Image build_global_context(const Frame& frame, ImageSize size) {
  check_frame(frame);
  return resample_region(frame, 0, 0, double(frame.width), double(frame.height), size);
}

void WindowConfig::validate() const {
  if (obs_len < 2) throw ConfigError("obs_len must be at least 2");
  if (tte_lo > tte_hi) throw ConfigError("tte_range lower bound exceeds upper bound");
  if (tte_lo < 0) throw ConfigError("tte_range must be non-negative");
  if (stride < 1) throw ConfigError("stride must be positive");
}

namespace {

// Positions of frames [first, last] in the track, or empty if any is missing.
std::vector<std::size_t> locate_frames(const PedestrianTrack& track, std::int64_t first, std::int64_t last) {
  const auto& recs = track.records;
  auto it = std::lower_bound(recs.begin(), recs.end(), first,
                             [](const TrackRecord& r, std::int64_t f) { return r.frame_index < f; });
  std::vector<std::size_t> pos;
  for (std::int64_t f = first; f <= last; ++f, ++it) {
    if (it == recs.end() || it->frame_index != f) return {};
    pos.push_back(static_cast<std::size_t>(it - recs.begin()));
  }
  return pos;
}

FeatureMatrix to_matrix(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  FeatureMatrix m{rows.size(), cols, {}};
  m.values.reserve(rows.size() * cols);
  for (const auto& r : rows)
    for (double v : r) m.values.push_back(static_cast<float>(v));
  return m;
}

}  // namespace

std::vector<ObservationWindow> extract_windows(const PedestrianTrack& track, const WindowConfig& cfg) {
  cfg.validate();
  std::vector<ObservationWindow> out;
  for (int tte = cfg.tte_lo; tte <= cfg.tte_hi; tte += cfg.stride) {
    const std::int64_t last = track.event_frame - tte;
    const std::int64_t first = last - cfg.obs_len + 1;
    const auto pos = locate_frames(track, first, last);
    if (pos.empty()) continue;

    std::vector<std::vector<double>> boxes, centers, poses, speeds;
    for (std::size_t k = 0; k < pos.size(); ++k) {
      const auto& r = track.records[pos[k]];
      boxes.push_back({r.bbox.x_tl, r.bbox.y_tl, r.bbox.x_br, r.bbox.y_br});
      centers.push_back({r.center.x, r.center.y});
      if (k == 0) continue;  // pose/speed drop the reference frame to stay aligned
      poses.emplace_back(r.pose.coords.begin(), r.pose.coords.end());
      const auto oh = one_hot(r.speed);
      speeds.emplace_back(oh.begin(), oh.end());
    }
    ObservationWindow w;
    w.pedestrian_id = track.pedestrian_id;
    w.last_frame = last;
    w.time_to_event = tte;
    w.label = track.label;
    w.bbox_delta = to_matrix(delta_encode(boxes), 4);
    w.center_delta = to_matrix(delta_encode(centers), 2);
    w.pose = to_matrix(poses, PoseKeypoints::kValues);
    w.speed = to_matrix(speeds, kSpeedCategories);
    out.push_back(std::move(w));
  }
  return out;
}

bool ClipConfig::wants(VisualInput input) const {
  switch (input) {
    case VisualInput::kLocalContext: return local_context;
    case VisualInput::kLocalSurround: return local_surround;
    case VisualInput::kGlobalContext: return global_context;
  }
  return false;
}

void attach_clips(ObservationWindow& window, const PedestrianTrack& track, const FrameSource& frames,
                  const ClipConfig& cfg) {
  if (!cfg.any()) return;
  const std::int64_t first = window.last_frame - static_cast<std::int64_t>(window.steps());
  const auto pos = locate_frames(track, first, window.last_frame);
  if (pos.empty()) throw WindowError("window frames missing from track " + track.pedestrian_id);
  for (auto input : kAllVisualInputs)
    if (cfg.wants(input)) window.clip(input) = Clip{};
  for (std::size_t p : pos) {
    const auto& rec = track.records[p];
    const Frame f = frames.frame(rec.frame_index);
    if (cfg.local_context) window.local_context->append(build_local_context(f, rec.bbox, cfg.enlarge_ratio, cfg.size));
    if (cfg.local_surround) {
      window.local_surround->append(build_local_surround(f, rec.bbox, cfg.enlarge_ratio, cfg.size));
    }
    if (cfg.global_context) window.global_context->append(build_global_context(f, cfg.size));
  }
}

std::vector<ObservationWindow> build_windows(const std::vector<PedestrianTrack>& tracks, const WindowConfig& wcfg,
                                             const FrameSource* frames, const ClipConfig& ccfg) {
  if (ccfg.any() && frames == nullptr) throw ConfigError("visual inputs requested without frames");
  std::vector<ObservationWindow> out;
  for (const auto& t : tracks) {
    for (auto& w : extract_windows(t, wcfg)) {
      if (ccfg.any()) attach_clips(w, t, *frames, ccfg);
      out.push_back(std::move(w));
    }
  }
  return out;
}

FeatureMatrix assemble_nonvisual(const ObservationWindow& window, const std::vector<NonVisualChannel>& enabled) {
  if (enabled.empty()) throw ConfigError("no non-visual channel enabled");
  std::vector<NonVisualChannel> order;
  for (auto c : kAllNonVisualChannels)
    if (std::find(enabled.begin(), enabled.end(), c) != enabled.end()) order.push_back(c);
  const std::size_t rows = window.steps();
  std::size_t cols = 0;
  for (auto c : order) {
    const auto& m = window.channel(c);
    if (m.rows != rows || m.cols != channel_width(c)) {
      throw WindowError("channel '" + std::string(to_string(c)) + "' is not aligned to " + std::to_string(rows) +
                        " steps");
    }
    cols += m.cols;
  }
  FeatureMatrix out{rows, cols, {}};
  out.values.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (auto c : order) {
      const auto& m = window.channel(c);
      out.values.insert(out.values.end(), m.values.begin() + static_cast<std::ptrdiff_t>(r * m.cols),
                        m.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols));
    }
  return out;
}

std::vector<ObservationWindow> resample_balance(const std::vector<ObservationWindow>& windows, std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < windows.size(); ++i) by_class[windows[i].label == 1 ? 1 : 0].push_back(i);
  if (by_class[0].empty() || by_class[1].empty()) throw BalanceError("resampling needs both classes present");
  const int minority = by_class[1].size() < by_class[0].size() ? 1 : 0;
  const std::size_t deficit = by_class[1 - minority].size() - by_class[minority].size();
  std::vector<ObservationWindow> out = windows;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, by_class[minority].size() - 1);
  for (std::size_t k = 0; k < deficit; ++k) out.push_back(windows[by_class[minority][pick(rng)]]);
  return out;
}

Split parse_split(std::string_view name) {
  if (name == "all") return Split::kAll;
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + std::string(name) + "' (all|train|val|test)");
}

std::vector<PedestrianTrack> select_split(const std::vector<PedestrianTrack>& tracks, Split split) {
  if (split == Split::kAll) return tracks;
  std::vector<const PedestrianTrack*> sorted;
  for (const auto& t : tracks) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->pedestrian_id < b->pedestrian_id; });
  std::vector<PedestrianTrack> out;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const std::size_t bucket = i % 5;
    const Split s = bucket <= 2 ? Split::kTrain : bucket == 3 ? Split::kVal : Split::kTest;
    if (s == split) out.push_back(*sorted[i]);
  }
  return out;
}

}  // namespace pedintent
