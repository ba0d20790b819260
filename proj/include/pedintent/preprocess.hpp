#pragma once

#include <cstdint>
#include <vector>

#include "pedintent/annotations.hpp"
#include "pedintent/data_model.hpp"

namespace pedintent {

// out[j] = seq[j + 1] - seq[0]; the reference frame is dropped.
std::vector<std::vector<double>> delta_encode(const std::vector<std::vector<double>>& seq);

struct ImageSize {
  std::size_t height = 32;
  std::size_t width = 32;
  bool operator==(const ImageSize&) const = default;
};

// Grey value painted over the pedestrian for the local surround, pre-normalization.
inline constexpr std::uint8_t kSurroundGrey = 128;

// Crop of the bbox enlarged about its center by `ratio`, bilinearly resized to
// `size` with corner-aligned sampling and divided by 255. Samples that fall
// outside the frame are 0.
Image build_local_context(const Frame& frame, const BoundingBox& bbox, double ratio, ImageSize size);
// As build_local_context, with the (un-enlarged) bbox painted grey first.
Image build_local_surround(const Frame& frame, const BoundingBox& bbox, double ratio, ImageSize size);
Image build_global_context(const Frame& frame, ImageSize size);

struct WindowConfig {
  int obs_len = 16;
  int tte_lo = 30;
  int tte_hi = 60;
  int stride = 15;

  void validate() const;  // throws ConfigError
};

// One window per time-to-event in {lo, lo + stride, ..., <= hi}. The last
// observed frame is event_frame - tte; windows whose raw frames are not all
// present in the track are skipped. Clips are not filled.
std::vector<ObservationWindow> extract_windows(const PedestrianTrack& track, const WindowConfig& cfg);

struct ClipConfig {
  bool local_context = false;
  bool local_surround = false;
  bool global_context = false;
  ImageSize size;
  double enlarge_ratio = 1.5;

  bool any() const { return local_context || local_surround || global_context; }
  bool wants(VisualInput input) const;
};

// Fills the requested clips of `window` from the raw frames it covers.
void attach_clips(ObservationWindow& window, const PedestrianTrack& track, const FrameSource& frames,
                  const ClipConfig& cfg);

// extract_windows + attach_clips over many tracks, in track order.
std::vector<ObservationWindow> build_windows(const std::vector<PedestrianTrack>& tracks, const WindowConfig& wcfg,
                                             const FrameSource* frames, const ClipConfig& ccfg);

// T x F, columns in the fixed order bbox delta, center delta, pose, speed,
// restricted to the enabled channels.
FeatureMatrix assemble_nonvisual(const ObservationWindow& window, const std::vector<NonVisualChannel>& enabled);

// Oversamples the minority class with replacement until both classes have the
// majority count. Originals keep their order; draws are appended.
std::vector<ObservationWindow> resample_balance(const std::vector<ObservationWindow>& windows, std::uint64_t seed);

// Deterministic partition by pid: tracks sorted by id, index mod 5 in
// {0,1,2} -> train, 3 -> val, 4 -> test.
enum class Split { kAll, kTrain, kVal, kTest };
Split parse_split(std::string_view name);  // throws ConfigError
std::vector<PedestrianTrack> select_split(const std::vector<PedestrianTrack>& tracks, Split split);

}  // namespace pedintent
