#include "parsestack/geoscene.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "parsestack/io.hpp"
#include "parsestack/rng.hpp"

namespace pstk {

namespace {

// Fine classes drawn by the renderer.
enum FineClass : int32_t {
  kBg = 0,
  kSkin = 1,
  kLeftEye = 2,
  kRightEye = 3,
  kUpperLip = 4,
  kLowerLip = 5,
  kCrest = 6,
  kFringe = 7,
};
constexpr int kFineClasses = 8;

constexpr uint32_t kDatasetVersion = 1;

}  // namespace

GeoSceneSpec GeoSceneSpec::defaults() {
  GeoSceneSpec s;
  s.palette = {{
      {0.13f, 0.14f, 0.17f},  // background
      {0.82f, 0.64f, 0.45f},  // skin
      {0.16f, 0.28f, 0.72f},  // left eye
      {0.16f, 0.28f, 0.72f},  // right eye: identical, side decides the class
      {0.74f, 0.18f, 0.24f},  // upper lip
      {0.74f, 0.18f, 0.24f},  // lower lip: identical, position decides
      {0.24f, 0.58f, 0.30f},  // crest
      {0.24f, 0.58f, 0.30f},  // fringe: identical, arc position decides
  }};
  return s;
}

void GeoSceneSpec::validate() const {
  check(count >= 1, "geoscene: count must be positive");
  check(image_size >= 32,
        cat("geoscene: image_size ", image_size,
            " violates the minimum-part-area invariant (need >= 32)"));
  check(scale_jitter >= 0.0 && scale_jitter <= 0.25,
        "geoscene: scale_jitter outside [0,0.25] violates the minimum-part-area invariant");
  check(position_jitter >= 0.0 && position_jitter <= 0.08 * image_size,
        "geoscene: position_jitter too large, figure parts could leave the canvas");
  check(rotation_jitter_deg >= 0.0 && rotation_jitter_deg <= 25.0,
        "geoscene: rotation_jitter_deg outside [0,25]");
  check(noise_amp >= 0.0 && noise_amp <= 0.5, "geoscene: noise_amp outside [0,0.5]");
  check(decoy_prob >= 0.0 && decoy_prob <= 1.0, "geoscene: decoy_prob outside [0,1]");
  check(palette.size() == static_cast<size_t>(kFineClasses),
        cat("geoscene: palette must have ", kFineClasses, " entries, got ",
            palette.size()));
  for (const auto& c : palette)
    for (float v : c)
      check(v >= 0.0f && v <= 1.0f, "geoscene: palette values must be in [0,1]");
  // Worst-case eye area under maximum shrink must stay above 4 px.
  const double min_scale = 1.0 - scale_jitter;
  const double rx = 0.23 * image_size * min_scale;
  const double ry = 0.26 * image_size * min_scale;
  const double eye_area = 3.14159 * (0.16 * rx) * (0.13 * ry);
  check(eye_area >= 4.0,
        cat("geoscene: spec violates the minimum-part-area invariant (worst-case "
            "eye area ", eye_area, " px < 4)"));
}

LabelHierarchy geoscene_hierarchy() {
  LabelHierarchy h;
  h.levels.push_back(
      {"coarse", {"background", "head", "mane"}, {0, 1, 1, 1, 2}});
  h.levels.push_back(
      {"medium", {"background", "skin", "eye", "mouth", "mane"},
       {0, 1, 2, 2, 3, 3, 4, 4}});
  h.levels.push_back({"fine",
                      {"background", "skin", "left_eye", "right_eye", "upper_lip",
                       "lower_lip", "crest", "fringe"},
                      {}});
  validate(h);
  return h;
}

namespace {

struct SceneBuffers {
  std::vector<float> rgb;      // [3,S,S]
  std::vector<int32_t> fine;   // [S,S]
};

// Renders one figure; returns false when a jitter draw degenerates (caller
// retries with the next derived stream).
bool render_scene(const GeoSceneSpec& spec, Rng& rng, SceneBuffers& out) {
  const int S = spec.image_size;
  const float Sf = static_cast<float>(S);
  out.fine.assign(static_cast<size_t>(S) * S, kBg);
  out.rgb.assign(static_cast<size_t>(3) * S * S, 0.0f);

  const float cx = 0.5f * Sf + static_cast<float>(rng.uniform(-spec.position_jitter, spec.position_jitter));
  const float cy = 0.52f * Sf + static_cast<float>(rng.uniform(-spec.position_jitter, spec.position_jitter));
  const float s = 1.0f + static_cast<float>(rng.uniform(-spec.scale_jitter, spec.scale_jitter));
  const float theta = static_cast<float>(rng.uniform(-spec.rotation_jitter_deg, spec.rotation_jitter_deg) * 3.14159265358979 / 180.0);
  const float ct = std::cos(theta), st = std::sin(theta);

  const float rx = 0.23f * Sf * s, ry = 0.26f * Sf * s;
  const float mane_w = 0.085f * Sf * s;
  const float orx = rx + mane_w, ory = ry + mane_w;

  // eyes/lips in the rotated head frame
  const float eye_u = 0.42f * rx, eye_v = -0.30f * ry;
  const float eye_ru = 0.16f * rx, eye_rv = 0.13f * ry;
  const float lip_hw = 0.30f * rx;
  const float lip_top = 0.36f * ry, lip_mid = 0.50f * ry, lip_bot = 0.66f * ry;

  // decoys: skin- and mane-colored blobs in the background
  struct Decoy {
    float x, y, r;
    int palette_class;
    bool present;
  };
  Decoy decoys[2] = {
      {0, 0, 0.11f * Sf * s, kSkin, rng.uniform() < spec.decoy_prob},
      {0, 0, 0.085f * Sf * s, kCrest, rng.uniform() < spec.decoy_prob},
  };
  for (Decoy& d : decoys) {
    if (!d.present) continue;
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      const float x = static_cast<float>(rng.uniform(d.r + 1.0, Sf - d.r - 1.0));
      const float y = static_cast<float>(rng.uniform(d.r + 1.0, Sf - d.r - 1.0));
      const float dx = x - cx, dy = y - cy;
      const float clearance = std::max(orx, ory) + d.r + 2.0f;
      if (dx * dx + dy * dy >= clearance * clearance) {
        d.x = x;
        d.y = y;
        placed = true;
      }
    }
    d.present = placed;
  }

  const float crescent_rad = 1.75f;   // ~100 degrees either side of "up"
  const float crest_rad = 0.85f;

  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const float px = static_cast<float>(x) + 0.5f, py = static_cast<float>(y) + 0.5f;
      const float dx = px - cx, dy = py - cy;
      const float u = ct * dx + st * dy;
      const float v = -st * dx + ct * dy;

      int32_t cls = kBg;
      const float head_q = (u / rx) * (u / rx) + (v / ry) * (v / ry);
      const float outer_q = (u / orx) * (u / orx) + (v / ory) * (v / ory);
      if (outer_q <= 1.0f && head_q > 1.0f) {
        const float phi = std::atan2(u, -v);  // angle from head-frame "up"
        if (std::fabs(phi) <= crescent_rad)
          cls = std::fabs(phi) <= crest_rad ? kCrest : kFringe;
      }
      if (head_q <= 1.0f) {
        cls = kSkin;
        const float lu = u - (-eye_u), ru = u - eye_u, ev = v - eye_v;
        if ((lu / eye_ru) * (lu / eye_ru) + (ev / eye_rv) * (ev / eye_rv) <= 1.0f)
          cls = kLeftEye;
        else if ((ru / eye_ru) * (ru / eye_ru) + (ev / eye_rv) * (ev / eye_rv) <= 1.0f)
          cls = kRightEye;
        else if (std::fabs(u) <= lip_hw && v >= lip_top && v <= lip_bot)
          cls = v <= lip_mid ? kUpperLip : kLowerLip;
      }
      out.fine[static_cast<size_t>(y) * S + x] = cls;

      int color_cls = cls;
      if (cls == kBg) {
        for (const Decoy& d : decoys) {
          if (!d.present) continue;
          const float ddx = px - d.x, ddy = py - d.y;
          if (ddx * ddx + ddy * ddy <= d.r * d.r) color_cls = d.palette_class;
        }
      }
      const auto& base = spec.palette[static_cast<size_t>(color_cls)];
      for (int c = 0; c < 3; ++c) {
        float val = base[static_cast<size_t>(c)] +
                    static_cast<float>(rng.uniform(-spec.noise_amp, spec.noise_amp));
        out.rgb[(static_cast<size_t>(c) * S + y) * S + x] =
            std::min(1.0f, std::max(0.0f, val));
      }
    }
  }

  // Structural acceptance: every fine part drawn with its minimum area, both
  // coarse parts large.
  int64_t area[kFineClasses] = {0};
  for (int32_t c : out.fine) ++area[c];
  for (int c = 1; c < kFineClasses; ++c)
    if (area[c] < 4) return false;
  const int64_t head_area = area[kSkin] + area[kLeftEye] + area[kRightEye] +
                            area[kUpperLip] + area[kLowerLip];
  const int64_t mane_area = area[kCrest] + area[kFringe];
  if (head_area < 100 || mane_area < 100 || area[kBg] < 100) return false;
  return true;
}

}  // namespace

template <typename T>
Dataset<T> generate_geoscene(const GeoSceneSpec& spec, const LabelHierarchy& h) {
  spec.validate();
  validate(h);
  check(h.num_classes(h.finest()) == kFineClasses,
        cat("geoscene: hierarchy finest level must have ", kFineClasses,
            " classes, got ", h.num_classes(h.finest())));

  Dataset<T> ds;
  ds.h = spec.image_size;
  ds.w = spec.image_size;
  ds.hierarchy_hash = hierarchy_hash(h);
  ds.samples.reserve(static_cast<size_t>(spec.count));

  const int S = spec.image_size;
  for (int i = 0; i < spec.count; ++i) {
    SceneBuffers buf;
    bool ok = false;
    for (uint64_t attempt = 0; attempt < 20 && !ok; ++attempt) {
      Rng rng(mix_seed(mix_seed(spec.seed, static_cast<uint64_t>(i)), attempt));
      ok = render_scene(spec, rng, buf);
    }
    check(ok, cat("geoscene: could not draw a valid sample at index ", i,
                  " (spec jitters too aggressive)"));

    Sample<T> sample;
    std::vector<T> img(buf.rgb.size());
    for (size_t k = 0; k < buf.rgb.size(); ++k) img[k] = static_cast<T>(buf.rgb[k]);
    sample.image = Tensor<T>::from({3, S, S}, std::move(img));
    sample.fine = IntMap::single(S, S);
    sample.fine.v = std::move(buf.fine);
    sample.levels = expand_sample(sample.fine, h);
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

template <typename T>
void save_dataset(const Dataset<T>& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "dataset: cannot open for writing: " + path);
  auto wr_u32 = [&](uint32_t v) {
    uint8_t b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 4);
  };
  auto wr_u64 = [&](uint64_t v) {
    uint8_t b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
    os.write(reinterpret_cast<char*>(b), 8);
  };
  os.write("PSDS", 4);
  wr_u32(kDatasetVersion);
  wr_u32(static_cast<uint32_t>(ds.samples.size()));
  wr_u32(static_cast<uint32_t>(ds.h));
  wr_u32(static_cast<uint32_t>(ds.w));
  wr_u64(ds.hierarchy_hash);

  const size_t img_n = static_cast<size_t>(3) * ds.h * ds.w;
  const size_t lab_n = static_cast<size_t>(ds.h) * ds.w;
  std::vector<uint8_t> record(img_n * 4 + lab_n * 2);
  for (const Sample<T>& s : ds.samples) {
    check(s.image.numel() == static_cast<int64_t>(img_n), "dataset: sample size mismatch");
    uint8_t* p = record.data();
    for (size_t k = 0; k < img_n; ++k) {
      const float f = static_cast<float>(s.image.data()[k]);
      std::memcpy(p, &f, 4);
      p += 4;
    }
    for (size_t k = 0; k < lab_n; ++k) {
      const uint16_t l = static_cast<uint16_t>(s.fine.v[k]);
      p[0] = static_cast<uint8_t>(l);
      p[1] = static_cast<uint8_t>(l >> 8);
      p += 2;
    }
    os.write(reinterpret_cast<char*>(record.data()),
             static_cast<std::streamsize>(record.size()));
    const uint32_t crc = static_cast<uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), record.data(), static_cast<uInt>(record.size())));
    wr_u32(crc);
  }
  check(os.good(), "dataset: write failed: " + path);
}

template <typename T>
Dataset<T> load_dataset(const std::string& path, const LabelHierarchy& h) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "dataset: cannot open: " + path);
  auto rd = [&](void* p, size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(is.gcount()) != n)
      fail(cat("dataset: truncated file while reading ", what, ": ", path));
  };
  auto rd_u32 = [&](const char* what) {
    uint8_t b[4];
    rd(b, 4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
  };
  auto rd_u64 = [&](const char* what) {
    uint8_t b[8];
    rd(b, 8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
  };

  char magic[4];
  rd(magic, 4, "magic");
  check(std::memcmp(magic, "PSDS", 4) == 0, "dataset: bad magic (expected PSDS): " + path);
  const uint32_t version = rd_u32("version");
  if (version != kDatasetVersion)
    fail(cat("dataset: version mismatch: file has ", version, ", reader expects ",
             kDatasetVersion));
  const uint32_t count = rd_u32("count");
  const uint32_t H = rd_u32("height");
  const uint32_t W = rd_u32("width");
  const uint64_t hash = rd_u64("hierarchy hash");
  const uint64_t want = hierarchy_hash(h);
  if (hash != want) {
    char a[24], b[24];
    std::snprintf(a, sizeof(a), "%016llx", static_cast<unsigned long long>(hash));
    std::snprintf(b, sizeof(b), "%016llx", static_cast<unsigned long long>(want));
    throw HashMismatchError(
        cat("dataset: hierarchy hash mismatch: file ", a, " vs hierarchy ", b));
  }

  Dataset<T> ds;
  ds.h = static_cast<int>(H);
  ds.w = static_cast<int>(W);
  ds.hierarchy_hash = hash;
  const size_t img_n = static_cast<size_t>(3) * H * W;
  const size_t lab_n = static_cast<size_t>(H) * W;
  std::vector<uint8_t> record(img_n * 4 + lab_n * 2);
  for (uint32_t i = 0; i < count; ++i) {
    rd(record.data(), record.size(), "record");
    const uint32_t crc_stored = rd_u32("record crc");
    const uint32_t crc = static_cast<uint32_t>(
        crc32(crc32(0L, Z_NULL, 0), record.data(), static_cast<uInt>(record.size())));
    if (crc != crc_stored)
      fail(cat("dataset: checksum failure at record ", i, ": ", path));

    Sample<T> s;
    std::vector<T> img(img_n);
    const uint8_t* p = record.data();
    for (size_t k = 0; k < img_n; ++k) {
      float f;
      std::memcpy(&f, p, 4);
      p += 4;
      img[k] = static_cast<T>(f);
    }
    s.image = Tensor<T>::from({3, static_cast<int64_t>(H), static_cast<int64_t>(W)},
                              std::move(img));
    s.fine = IntMap::single(static_cast<int>(H), static_cast<int>(W));
    for (size_t k = 0; k < lab_n; ++k) {
      s.fine.v[k] = static_cast<int32_t>(p[0] | (p[1] << 8));
      p += 2;
    }
    s.levels = expand_sample(s.fine, h);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

template <typename T>
void export_png(const Dataset<T>& ds, const LabelHierarchy& h, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "img");
  for (int k = 0; k < h.num_levels(); ++k)
    fs::create_directories(fs::path(dir) / "lbl" / h.levels[static_cast<size_t>(k)].name);

  char name[32];
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample<T>& s = ds.samples[i];
    std::snprintf(name, sizeof(name), "%06zu.png", i);
    const size_t plane = static_cast<size_t>(ds.h) * ds.w;
    std::vector<uint8_t> rgb(plane * 3);
    for (size_t q = 0; q < plane; ++q)
      for (int c = 0; c < 3; ++c) {
        const double v = static_cast<double>(s.image.data()[static_cast<size_t>(c) * plane + q]);
        rgb[q * 3 + static_cast<size_t>(c)] =
            static_cast<uint8_t>(std::lround(std::min(1.0, std::max(0.0, v)) * 255.0));
      }
    write_png_rgb((fs::path(dir) / "img" / name).string(), ds.w, ds.h, rgb);
    for (int k = 0; k < h.num_levels(); ++k) {
      std::vector<uint8_t> gray(plane);
      const IntMap& m = s.levels[static_cast<size_t>(k)];
      for (size_t q = 0; q < plane; ++q) gray[q] = static_cast<uint8_t>(m.v[q]);
      write_png_gray(
          (fs::path(dir) / "lbl" / h.levels[static_cast<size_t>(k)].name / name).string(),
          ds.w, ds.h, gray);
    }
  }
}

#define PSTK_INSTANTIATE(T)                                                        \
  template Dataset<T> generate_geoscene<T>(const GeoSceneSpec&, const LabelHierarchy&); \
  template void save_dataset<T>(const Dataset<T>&, const std::string&);            \
  template Dataset<T> load_dataset<T>(const std::string&, const LabelHierarchy&);  \
  template void export_png<T>(const Dataset<T>&, const LabelHierarchy&, const std::string&);

PSTK_INSTANTIATE(float)
PSTK_INSTANTIATE(double)
#undef PSTK_INSTANTIATE

}  // namespace pstk
