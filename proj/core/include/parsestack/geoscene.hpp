#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "parsestack/hierarchy.hpp"
#include "parsestack/tensor.hpp"

namespace pstk {

// Procedural "geoscene" figures: a rotated head ellipse carrying two eyes
// (identical appearance, told apart only by side), two stacked lip
// rectangles, and an outer mane crescent split into crest and fringe.
// Skin- and mane-colored decoy blobs are drawn as background so that local
// appearance alone cannot solve the fine task.
struct GeoSceneSpec {
  int image_size = 64;
  uint64_t seed = 1;
  int count = 100;
  double position_jitter = 3.0;   // head center, pixels
  double scale_jitter = 0.10;     // relative
  double rotation_jitter_deg = 10.0;
  double noise_amp = 0.05;
  double decoy_prob = 0.7;
  // Base color per fine class (background, skin, left_eye, right_eye,
  // upper_lip, lower_lip, crest, fringe).
  std::vector<std::array<float, 3>> palette;

  static GeoSceneSpec defaults();
  void validate() const;
};

// The shipped 3/5/8-class taxonomy used by the generator.
LabelHierarchy geoscene_hierarchy();

template <typename T>
struct Sample {
  Tensor<T> image;      // [3,H,W] in [0,1]
  IntMap fine;          // finest-level groundtruth
  LabelMapSet levels;   // derived via expand_sample
};

template <typename T>
struct Dataset {
  int h = 0, w = 0;
  uint64_t hierarchy_hash = 0;
  std::vector<Sample<T>> samples;

  int64_t size() const { return static_cast<int64_t>(samples.size()); }
};

// Deterministic in (spec, hierarchy); per-sample streams are derived from
// the seed so generation order cannot change content.
template <typename T>
Dataset<T> generate_geoscene(const GeoSceneSpec& spec, const LabelHierarchy& h);

// Binary container (PSDS): header + per-record image f32 / fine labels u16 /
// CRC32. Round-trips are bitwise.
template <typename T>
void save_dataset(const Dataset<T>& ds, const std::string& path);

template <typename T>
Dataset<T> load_dataset(const std::string& path, const LabelHierarchy& h);

// Human-inspection export: img/%06d.png plus lbl/<level>/%06d.png with the
// class index in 8-bit gray.
template <typename T>
void export_png(const Dataset<T>& ds, const LabelHierarchy& h, const std::string& dir);

}  // namespace pstk
