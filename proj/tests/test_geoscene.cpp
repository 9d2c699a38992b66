#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "parsestack/geoscene.hpp"
#include "parsestack/io.hpp"
#include "parsestack/metrics.hpp"

using pstk::Dataset;
using pstk::GeoSceneSpec;
using pstk::IntMap;

namespace fs = std::filesystem;

TEST_SUITE_BEGIN("geoscene");

TEST_CASE("generation is a pure function of spec and hierarchy") {
  pstk::LabelHierarchy h = pstk::geoscene_hierarchy();
  GeoSceneSpec spec = GeoSceneSpec::defaults();
  spec.count = 8;
  spec.seed = 42;
  Dataset<float> a = pstk::generate_geoscene<float>(spec, h);
  Dataset<float> b = pstk::generate_geoscene<float>(spec, h);
  REQUIRE(a.size() == b.size());
  for (int64_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[static_cast<size_t>(i)].image.data() ==
          b.samples[static_cast<size_t>(i)].image.data());
    CHECK(a.samples[static_cast<size_t>(i)].fine == b.samples[static_cast<size_t>(i)].fine);
  }
}

TEST_CASE("zero noise and no decoys give constant-color part regions") {
  pstk::LabelHierarchy h = pstk::geoscene_hierarchy();
  GeoSceneSpec spec = GeoSceneSpec::defaults();
  spec.count = 3;
  spec.seed = 5;
  spec.noise_amp = 0.0;
  spec.decoy_prob = 0.0;
  Dataset<double> ds = pstk::generate_geoscene<double>(spec, h);
  const int S = spec.image_size;
  for (const auto& s : ds.samples) {
    std::map<int32_t, std::array<double, 3>> seen;
    for (int q = 0; q < S * S; ++q) {
      const int32_t cls = s.fine.v[static_cast<size_t>(q)];
      std::array<double, 3> rgb = {s.image.data()[static_cast<size_t>(q)],
                                   s.image.data()[static_cast<size_t>(S * S + q)],
                                   s.image.data()[static_cast<size_t>(2 * S * S + q)]};
      auto [it, fresh] = seen.emplace(cls, rgb);
      if (!fresh) CHECK(it->second == rgb);
    }
  }
}

TEST_CASE("part areas respect the published minima on every sample") {
  pstk::LabelHierarchy h = pstk::geoscene_hierarchy();
  GeoSceneSpec spec = GeoSceneSpec::defaults();
  spec.count = 100;
  spec.seed = 17;
  Dataset<float> ds = pstk::generate_geoscene<float>(spec, h);
  for (const auto& s : ds.samples) {
    std::vector<int64_t> fine_area(8, 0);
    for (int32_t v : s.fine.v) ++fine_area[static_cast<size_t>(v)];
    for (int c = 1; c < 8; ++c) CHECK(fine_area[static_cast<size_t>(c)] >= 4);
    std::vector<int64_t> coarse_area(3, 0);
    for (int32_t v : s.levels[0].v) ++coarse_area[static_cast<size_t>(v)];
    CHECK(coarse_area[1] >= 100);
    CHECK(coarse_area[2] >= 100);
    // label-map-set consistency
    CHECK(pstk::consistency(s.levels, h) == 1.0);
  }
}

TEST_CASE("class-presence statistics over 500 samples match the pinned fixture") {
  pstk::LabelHierarchy h = pstk::geoscene_hierarchy();
  GeoSceneSpec spec = GeoSceneSpec::defaults();
  spec.count = 500;
  spec.seed = 42;
  Dataset<float> ds = pstk::generate_geoscene<float>(spec, h);
  std::vector<int> present(8, 0);
  for (const auto& s : ds.samples) {
    std::vector<bool> seen(8, false);
    for (int32_t v : s.fine.v) seen[static_cast<size_t>(v)] = true;
    for (int c = 0; c < 8; ++c)
      if (seen[static_cast<size_t>(c)]) ++present[static_cast<size_t>(c)];
  }
  // every fine class appears in >= 80% of samples; the construction keeps
  // all parts on-canvas, so presence is total
  for (int c = 0; c < 8; ++c) CHECK(present[static_cast<size_t>(c)] == 500);
}

TEST_CASE("specs violating the minimum-part-area invariant are rejected") {
  pstk::LabelHierarchy h = pstk::geoscene_hierarchy();
  GeoSceneSpec spec = GeoSceneSpec::defaults();
  spec.image_size = 32;
  spec.position_jitter = 2.0;
  spec.scale_jitter = 0.25;
  spec.count = 1;
  CHECK_THROWS_WITH_AS(pstk::generate_geoscene<float>(spec, h),
                       doctest::Contains("minimum-part-area"), pstk::Error);
}

TEST_CASE("dataset round-trips bitwise and the file size follows the format") {
  pstk::LabelHierarchy h = pstk::geoscene_hierarchy();
  GeoSceneSpec spec = GeoSceneSpec::defaults();
  spec.count = 5;
  spec.seed = 99;
  Dataset<float> ds = pstk::generate_geoscene<float>(spec, h);
  const std::string path = (fs::temp_directory_path() / "pstk_ds_rt.psds").string();
  pstk::save_dataset(ds, path);

  const int64_t record = 3LL * 64 * 64 * 4 + 64LL * 64 * 2 + 4;
  CHECK(static_cast<int64_t>(fs::file_size(path)) == 28 + 5 * record);

  Dataset<float> back = pstk::load_dataset<float>(path, h);
  REQUIRE(back.size() == ds.size());
  for (int64_t i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[static_cast<size_t>(i)].image.data() ==
          ds.samples[static_cast<size_t>(i)].image.data());
    CHECK(back.samples[static_cast<size_t>(i)].fine ==
          ds.samples[static_cast<size_t>(i)].fine);
    CHECK(back.samples[static_cast<size_t>(i)].levels.size() == 3);
  }
}

TEST_CASE("a corrupted byte fails the record checksum") {
  pstk::LabelHierarchy h = pstk::geoscene_hierarchy();
  GeoSceneSpec spec = GeoSceneSpec::defaults();
  spec.count = 2;
  spec.seed = 7;
  Dataset<float> ds = pstk::generate_geoscene<float>(spec, h);
  const std::string path = (fs::temp_directory_path() / "pstk_ds_bad.psds").string();
  pstk::save_dataset(ds, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(28 + 100);
    char c;
    f.seekg(28 + 100);
    f.read(&c, 1);
    c = static_cast<char>(c ^ 0x40);
    f.seekp(28 + 100);
    f.write(&c, 1);
  }
  CHECK_THROWS_WITH_AS(pstk::load_dataset<float>(path, h),
                       doctest::Contains("checksum"), pstk::Error);
}

TEST_CASE("truncated files and hierarchy mismatches are rejected") {
  pstk::LabelHierarchy h = pstk::geoscene_hierarchy();
  GeoSceneSpec spec = GeoSceneSpec::defaults();
  spec.count = 2;
  spec.seed = 7;
  Dataset<float> ds = pstk::generate_geoscene<float>(spec, h);
  const std::string path = (fs::temp_directory_path() / "pstk_ds_trunc.psds").string();
  pstk::save_dataset(ds, path);
  fs::resize_file(path, fs::file_size(path) - 10);
  CHECK_THROWS_WITH_AS(pstk::load_dataset<float>(path, h),
                       doctest::Contains("truncated"), pstk::Error);

  pstk::save_dataset(ds, path);
  pstk::LabelHierarchy other = pstk::hierarchy_from_text(
      "level coarse\nclass 0 background\nclass 1 x\n"
      "merge 0 -> 0\nmerge 1 -> 1\nmerge 2 -> 1\nmerge 3 -> 1\nmerge 4 -> 1\n"
      "merge 5 -> 1\nmerge 6 -> 1\nmerge 7 -> 1\n"
      "level fine\nclass 0 background\nclass 1 a\nclass 2 b\nclass 3 c\n"
      "class 4 d\nclass 5 e\nclass 6 f\nclass 7 g\n");
  CHECK_THROWS_WITH_AS(pstk::load_dataset<float>(path, other),
                       doctest::Contains("hash mismatch"), pstk::Error);
}

TEST_CASE("png export writes inspectable label maps") {
  pstk::LabelHierarchy h = pstk::geoscene_hierarchy();
  GeoSceneSpec spec = GeoSceneSpec::defaults();
  spec.count = 2;
  spec.seed = 3;
  Dataset<float> ds = pstk::generate_geoscene<float>(spec, h);
  const std::string dir = (fs::temp_directory_path() / "pstk_png_export").string();
  fs::remove_all(dir);
  pstk::export_png(ds, h, dir);
  CHECK(fs::exists(fs::path(dir) / "img" / "000000.png"));
  CHECK(fs::exists(fs::path(dir) / "img" / "000001.png"));
  pstk::PngImage lbl = pstk::read_png((fs::path(dir) / "lbl" / "fine" / "000001.png").string());
  CHECK(lbl.w == 64);
  CHECK(lbl.h == 64);
  CHECK(lbl.channels == 1);
  for (int q = 0; q < 64 * 64; ++q)
    CHECK(static_cast<int32_t>(lbl.pixels[static_cast<size_t>(q)]) ==
          ds.samples[1].fine.v[static_cast<size_t>(q)]);
}

TEST_SUITE_END();
