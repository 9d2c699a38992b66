#include "parsestack/hierarchy.hpp"

#include <fstream>
#include <sstream>

#include "parsestack/common.hpp"

namespace pstk {

std::vector<int32_t> LabelHierarchy::composed_map(int target_level) const {
  const int fine_count = num_classes(finest());
  std::vector<int32_t> map(static_cast<size_t>(fine_count));
  for (int c = 0; c < fine_count; ++c) map[static_cast<size_t>(c)] = c;
  for (int k = finest() - 1; k >= target_level; --k) {
    const std::vector<int32_t>& step = levels[static_cast<size_t>(k)].merge_from_finer;
    for (int32_t& m : map) m = step[static_cast<size_t>(m)];
  }
  return map;
}

void validate(const LabelHierarchy& h) {
  check(!h.levels.empty(), "hierarchy: empty levels list");
  for (int k = 0; k < h.num_levels(); ++k) {
    const LabelLevel& lvl = h.levels[static_cast<size_t>(k)];
    check(lvl.num_classes() >= 1, cat("hierarchy: level '", lvl.name, "' has no classes"));
    if (lvl.class_names[0] != "background")
      fail(cat("hierarchy: background violation at level '", lvl.name,
               "': class 0 must be named 'background', got '", lvl.class_names[0], "'"));
    if (k + 1 < h.num_levels() &&
        lvl.num_classes() > h.num_classes(k + 1))
      fail(cat("hierarchy: decreasing class count from level '", lvl.name, "' (",
               lvl.num_classes(), ") to finer level '",
               h.levels[static_cast<size_t>(k + 1)].name, "' (", h.num_classes(k + 1), ")"));
    if (k == h.finest()) {
      check(lvl.merge_from_finer.empty(),
            cat("hierarchy: finest level '", lvl.name, "' must not carry a merge map"));
      continue;
    }
    const int finer_count = h.num_classes(k + 1);
    const std::vector<int32_t>& m = lvl.merge_from_finer;
    if (static_cast<int>(m.size()) != finer_count)
      fail(cat("hierarchy: non-total merge map at level '", lvl.name, "': covers ",
               m.size(), " of ", finer_count, " finer classes"));
    std::vector<bool> hit(static_cast<size_t>(lvl.num_classes()), false);
    for (int c = 0; c < finer_count; ++c) {
      const int32_t to = m[static_cast<size_t>(c)];
      if (to < 0)
        fail(cat("hierarchy: non-total merge map at level '", lvl.name,
                 "': finer class ", c, " is unmapped"));
      if (to >= lvl.num_classes())
        fail(cat("hierarchy: merge target ", to, " out of range at level '", lvl.name, "'"));
      hit[static_cast<size_t>(to)] = true;
    }
    if (m[0] != 0)
      fail(cat("hierarchy: background violation at level '", lvl.name,
               "': finer background must merge to background, got ", m[0]));
    for (int c = 0; c < lvl.num_classes(); ++c)
      if (!hit[static_cast<size_t>(c)])
        fail(cat("hierarchy: non-surjective merge map at level '", lvl.name,
                 "': class ", c, " ('", lvl.class_names[static_cast<size_t>(c)],
                 "') is not the target of any finer class"));
  }
}

IntMap merge_labels(const IntMap& fine, const LabelHierarchy& h, int target_level) {
  check(target_level >= 0 && target_level < h.num_levels(),
        cat("merge_labels: level ", target_level, " out of range"));
  const std::vector<int32_t> map = h.composed_map(target_level);
  const int fine_count = h.num_classes(h.finest());
  IntMap out(fine.n, fine.h, fine.w);
  for (size_t i = 0; i < fine.v.size(); ++i) {
    const int32_t c = fine.v[i];
    if (c < 0 || c >= fine_count) {
      const int64_t px = static_cast<int64_t>(i);
      const int64_t plane = static_cast<int64_t>(fine.h) * fine.w;
      fail(cat("merge_labels: label ", c, " out of range [0,", fine_count,
               ") at (n=", px / plane, ",y=", (px % plane) / fine.w, ",x=",
               px % fine.w, ")"));
    }
    out.v[i] = map[static_cast<size_t>(c)];
  }
  return out;
}

LabelMapSet expand_sample(const IntMap& fine, const LabelHierarchy& h) {
  LabelMapSet set;
  set.reserve(static_cast<size_t>(h.num_levels()));
  for (int k = 0; k < h.num_levels(); ++k) set.push_back(merge_labels(fine, h, k));
  return set;
}

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void parse_fail(int line_no, const std::string& msg) {
  fail(cat("hierarchy parse error at line ", line_no, ": ", msg));
}

}  // namespace

LabelHierarchy hierarchy_from_text(const std::string& doc) {
  LabelHierarchy h;
  // Merge lines under level k reference the immediately finer level, whose
  // classes appear later in the file; resolve sizes after the full pass.
  std::vector<std::vector<std::pair<int32_t, int32_t>>> merges;

  std::istringstream in(doc);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = raw;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "level") {
      std::string name;
      std::getline(ls, name);
      name = trim(name);
      if (name.empty()) parse_fail(line_no, "level requires a name");
      h.levels.push_back(LabelLevel{name, {}, {}});
      merges.emplace_back();
    } else if (kw == "class") {
      if (h.levels.empty()) parse_fail(line_no, "class before any level");
      int index = -1;
      if (!(ls >> index)) parse_fail(line_no, "class requires an index");
      std::string name;
      std::getline(ls, name);
      name = trim(name);
      if (name.empty()) parse_fail(line_no, "class requires a name");
      auto& names = h.levels.back().class_names;
      if (index != static_cast<int>(names.size()))
        parse_fail(line_no, cat("class index ", index, " out of order (expected ",
                                names.size(), ")"));
      names.push_back(name);
    } else if (kw == "merge") {
      if (h.levels.empty()) parse_fail(line_no, "merge before any level");
      int from = -1, to = -1;
      std::string arrow;
      if (!(ls >> from >> arrow >> to) || arrow != "->")
        parse_fail(line_no, "expected 'merge <fine_index> -> <coarse_index>'");
      merges.back().emplace_back(from, to);
    } else {
      parse_fail(line_no, cat("unknown keyword '", kw, "'"));
    }
  }
  check(!h.levels.empty(), "hierarchy: empty levels list");

  for (int k = 0; k < h.num_levels(); ++k) {
    if (k == h.finest()) {
      if (!merges[static_cast<size_t>(k)].empty())
        fail(cat("hierarchy: finest level '", h.levels[static_cast<size_t>(k)].name,
                 "' must not carry merge lines"));
      continue;
    }
    const int finer_count = h.num_classes(k + 1);
    std::vector<int32_t>& m = h.levels[static_cast<size_t>(k)].merge_from_finer;
    m.assign(static_cast<size_t>(finer_count), -1);
    for (auto [from, to] : merges[static_cast<size_t>(k)]) {
      if (from < 0 || from >= finer_count)
        fail(cat("hierarchy: merge source ", from, " out of range at level '",
                 h.levels[static_cast<size_t>(k)].name, "'"));
      m[static_cast<size_t>(from)] = to;
    }
  }
  validate(h);
  return h;
}

std::string hierarchy_to_text(const LabelHierarchy& h) {
  std::ostringstream os;
  for (int k = 0; k < h.num_levels(); ++k) {
    const LabelLevel& lvl = h.levels[static_cast<size_t>(k)];
    os << "level " << lvl.name << "\n";
    for (int c = 0; c < lvl.num_classes(); ++c)
      os << "class " << c << " " << lvl.class_names[static_cast<size_t>(c)] << "\n";
    for (size_t i = 0; i < lvl.merge_from_finer.size(); ++i)
      os << "merge " << i << " -> " << lvl.merge_from_finer[i] << "\n";
  }
  return os.str();
}

LabelHierarchy load_hierarchy(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "cannot open hierarchy file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hierarchy_from_text(ss.str());
}

void save_hierarchy(const LabelHierarchy& h, const std::string& path) {
  std::ofstream out(path);
  check(out.good(), "cannot write hierarchy file: " + path);
  out << hierarchy_to_text(h);
}

uint64_t hierarchy_hash(const LabelHierarchy& h) {
  const std::string text = hierarchy_to_text(h);
  uint64_t hash = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001B3ull;
  }
  return hash;
}

}  // namespace pstk
