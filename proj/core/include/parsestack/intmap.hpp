#pragma once

#include <cstdint>
#include <vector>

#include "parsestack/common.hpp"

namespace pstk {

// Integer label map [N,H,W]; n == 1 for a single image's map.
struct IntMap {
  int n = 1, h = 0, w = 0;
  std::vector<int32_t> v;

  IntMap() = default;
  IntMap(int n_, int h_, int w_, int32_t fill = 0)
      : n(n_), h(h_), w(w_), v(static_cast<size_t>(n_) * h_ * w_, fill) {}
  static IntMap single(int h, int w, int32_t fill = 0) { return IntMap(1, h, w, fill); }

  int64_t numel() const { return static_cast<int64_t>(n) * h * w; }

  int32_t& at(int i, int y, int x) {
    return v[(static_cast<size_t>(i) * h + y) * w + x];
  }
  int32_t at(int i, int y, int x) const {
    return v[(static_cast<size_t>(i) * h + y) * w + x];
  }

  bool operator==(const IntMap& o) const {
    return n == o.n && h == o.h && w == o.w && v == o.v;
  }
};

}  // namespace pstk
