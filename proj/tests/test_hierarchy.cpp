#include <set>

#include "doctest.h"
#include "parsestack/hierarchy.hpp"
#include "support/suites.hpp"

using pstk::IntMap;
using pstk::LabelHierarchy;

namespace {

// Table-style 3/6/11 face taxonomy (the shipped helen3.hier fixture).
const char* kHelen3 = R"(# face parsing, three granularities
level coarse
class 0 background
class 1 face
class 2 hair
merge 0 -> 0
merge 1 -> 1
merge 2 -> 1
merge 3 -> 1
merge 4 -> 1
merge 5 -> 2
level medium
class 0 background
class 1 face skin
class 2 eyes
class 3 nose
class 4 mouth
class 5 hair
merge 0 -> 0
merge 1 -> 1
merge 2 -> 2
merge 3 -> 2
merge 4 -> 2
merge 5 -> 2
merge 6 -> 3
merge 7 -> 4
merge 8 -> 4
merge 9 -> 4
merge 10 -> 5
level fine
class 0 background
class 1 face skin
class 2 left eyebrow
class 3 right eyebrow
class 4 left eye
class 5 right eye
class 6 nose
class 7 upper lip
class 8 inner mouth
class 9 lower lip
class 10 hair
)";

}  // namespace

TEST_SUITE_BEGIN("hierarchy");

TEST_CASE("the three-level face taxonomy validates with counts 3/6/11") {
  LabelHierarchy h = pstk::hierarchy_from_text(kHelen3);
  CHECK(h.num_levels() == 3);
  CHECK(h.num_classes(0) == 3);
  CHECK(h.num_classes(1) == 6);
  CHECK(h.num_classes(2) == 11);
}

TEST_CASE("a single-level hierarchy is valid") {
  LabelHierarchy h = pstk::hierarchy_from_text(
      "level only\nclass 0 background\nclass 1 thing\n");
  CHECK(h.num_levels() == 1);
  pstk::LabelMapSet set = pstk::expand_sample(IntMap::single(2, 2, 1), h);
  CHECK(set.size() == 1);
  CHECK(pstk::consistency(set, h) == 1.0);
}

TEST_CASE("a missing merge entry is reported as non-total") {
  LabelHierarchy h = pstk::hierarchy_from_text(kHelen3);
  h.levels[1].merge_from_finer[5] = -1;  // un-map fine class 5
  CHECK_THROWS_WITH_AS(pstk::validate(h), doctest::Contains("non-total"), pstk::Error);
}

TEST_CASE("a merge map missing a target is reported as non-surjective") {
  LabelHierarchy h = pstk::hierarchy_from_text(kHelen3);
  for (int32_t& v : h.levels[0].merge_from_finer)
    if (v == 2) v = 1;  // nothing maps to "hair" anymore
  CHECK_THROWS_WITH_AS(pstk::validate(h), doctest::Contains("non-surjective"),
                       pstk::Error);
}

TEST_CASE("background and class-count violations are named") {
  LabelHierarchy h = pstk::hierarchy_from_text(kHelen3);
  h.levels[1].merge_from_finer[0] = 1;
  CHECK_THROWS_WITH_AS(pstk::validate(h), doctest::Contains("background"), pstk::Error);

  LabelHierarchy g;
  g.levels.push_back({"a", {"background", "x", "y"}, {0, 1}});
  g.levels.push_back({"b", {"background", "z"}, {}});
  CHECK_THROWS_WITH_AS(pstk::validate(g), doctest::Contains("decreasing"), pstk::Error);
}

TEST_CASE("the mouth parts merge into a constant mouth map") {
  LabelHierarchy h = pstk::hierarchy_from_text(kHelen3);
  IntMap fines = IntMap::single(3, 3);
  const int32_t mouth_parts[3] = {7, 8, 9};  // upper lip, inner mouth, lower lip
  for (size_t i = 0; i < fines.v.size(); ++i) fines.v[i] = mouth_parts[i % 3];
  IntMap med = pstk::merge_labels(fines, h, 1);
  for (int32_t v : med.v) CHECK(v == 4);  // medium "mouth"
}

TEST_CASE("merging to the finest level is the identity") {
  LabelHierarchy h = pstk::hierarchy_from_text(kHelen3);
  auto rng = testutil::make_rng(77);
  IntMap fine = testutil::random_labels(rng, 1, 5, 4, 11);
  CHECK(pstk::merge_labels(fine, h, 2) == fine);
}

TEST_CASE("out-of-range pixels are rejected with their position") {
  LabelHierarchy h = pstk::hierarchy_from_text(kHelen3);
  IntMap fine = IntMap::single(2, 2, 0);
  fine.at(0, 1, 1) = 42;
  CHECK_THROWS_WITH_AS(pstk::merge_labels(fine, h, 0), doctest::Contains("y=1"),
                       pstk::Error);
}

TEST_CASE("merge equals a per-pixel dictionary lookup") {
  auto rng = testutil::make_rng(78);
  LabelHierarchy h = suites::random_hierarchy(rng);
  IntMap fine = testutil::random_labels(rng, 1, 6, 6, h.num_classes(h.finest()));
  const std::vector<int32_t> map = h.composed_map(0);
  IntMap got = pstk::merge_labels(fine, h, 0);
  for (size_t i = 0; i < fine.v.size(); ++i)
    CHECK(got.v[i] == map[static_cast<size_t>(fine.v[i])]);
}

TEST_CASE("class-set image property") {
  auto rng = testutil::make_rng(79);
  LabelHierarchy h = suites::random_hierarchy(rng);
  IntMap fine = testutil::random_labels(rng, 1, 8, 8, h.num_classes(h.finest()));
  const std::vector<int32_t> map = h.composed_map(0);
  IntMap merged = pstk::merge_labels(fine, h, 0);
  std::set<int32_t> got(merged.v.begin(), merged.v.end());
  std::set<int32_t> want;
  for (int32_t v : std::set<int32_t>(fine.v.begin(), fine.v.end()))
    want.insert(map[static_cast<size_t>(v)]);
  CHECK(got == want);
}

TEST_CASE("parse errors carry line numbers; empty documents are rejected") {
  CHECK_THROWS_WITH_AS(pstk::hierarchy_from_text("level a\nclass 0 background\nbogus x\n"),
                       doctest::Contains("line 3"), pstk::Error);
  CHECK_THROWS_AS(pstk::hierarchy_from_text("# nothing\n"), pstk::Error);
}

TEST_CASE("randomized hierarchy property suite") {
  std::string msg;
  const bool ok = suites::hierarchy_suite(200, &msg);
  INFO(msg);
  CHECK(ok);
}

TEST_SUITE_END();
