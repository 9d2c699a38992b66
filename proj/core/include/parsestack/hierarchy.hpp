#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "parsestack/intmap.hpp"

namespace pstk {

// One granularity level. merge_from_finer maps class indices of the
// immediately finer level onto this level; it is empty on the finest level.
struct LabelLevel {
  std::string name;
  std::vector<std::string> class_names;
  std::vector<int32_t> merge_from_finer;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

// Ordered coarse -> fine taxonomy. Class 0 is background at every level and
// background maps to background across levels.
struct LabelHierarchy {
  std::vector<LabelLevel> levels;

  int num_levels() const { return static_cast<int>(levels.size()); }
  int finest() const { return num_levels() - 1; }
  int num_classes(int level) const { return levels[static_cast<size_t>(level)].num_classes(); }

  // Composition of merge maps from the finest level down to target_level.
  std::vector<int32_t> composed_map(int target_level) const;
};

// Per-level label maps, coarse -> fine, all with the same extents.
using LabelMapSet = std::vector<IntMap>;

// Checks all structural invariants; throws Error naming the violation
// ("non-total", "non-surjective", "background violation",
// "decreasing class count").
void validate(const LabelHierarchy& h);

// Pixel-wise application of the composed finest -> target_level map.
IntMap merge_labels(const IntMap& fine, const LabelHierarchy& h, int target_level);

// merge_labels for every level; element [k] supervises level k.
LabelMapSet expand_sample(const IntMap& fine, const LabelHierarchy& h);

// `.hier` text format: `level <name>` opens a level (coarse first),
// `class <index> <name>` enumerates classes, `merge <fine> -> <coarse>`
// lines under a non-finest level map from the immediately finer level.
// '#' starts a comment.
LabelHierarchy hierarchy_from_text(const std::string& doc);
std::string hierarchy_to_text(const LabelHierarchy& h);

LabelHierarchy load_hierarchy(const std::string& path);
void save_hierarchy(const LabelHierarchy& h, const std::string& path);

// FNV-1a over the canonical text form; identifies the taxonomy in dataset
// and checkpoint headers.
uint64_t hierarchy_hash(const LabelHierarchy& h);

}  // namespace pstk
