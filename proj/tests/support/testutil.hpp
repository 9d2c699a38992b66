#pragma once

#include <random>
#include <vector>

#include "parsestack/intmap.hpp"
#include "parsestack/tensor.hpp"

namespace testutil {

inline std::mt19937_64 make_rng(uint64_t seed) { return std::mt19937_64(seed); }

inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(g() >> 11) * 0x1.0p-53);
}

template <typename T>
pstk::Tensor<T> random_tensor(std::mt19937_64& g, pstk::Shape shape, double lo = -1.0,
                              double hi = 1.0) {
  std::vector<T> data(static_cast<size_t>(pstk::numel_of(shape)));
  for (T& x : data) x = static_cast<T>(uniform(g, lo, hi));
  return pstk::Tensor<T>::from(std::move(shape), std::move(data));
}

// Values pairwise separated by at least `gap`; safe for maxpool gradients.
template <typename T>
pstk::Tensor<T> distinct_tensor(std::mt19937_64& g, pstk::Shape shape,
                                double gap = 0.01) {
  const size_t n = static_cast<size_t>(pstk::numel_of(shape));
  std::vector<size_t> perm(n);
  for (size_t i = 0; i < n; ++i) perm[i] = i;
  for (size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[g() % i]);
  std::vector<T> data(n);
  for (size_t i = 0; i < n; ++i)
    data[i] = static_cast<T>(static_cast<double>(perm[i]) * gap +
                             uniform(g, -gap * 0.2, gap * 0.2));
  return pstk::Tensor<T>::from(std::move(shape), std::move(data));
}

// Values kept away from zero (relu nondifferentiability margin).
template <typename T>
pstk::Tensor<T> off_zero_tensor(std::mt19937_64& g, pstk::Shape shape,
                                double margin = 5e-3) {
  pstk::Tensor<T> t = random_tensor<T>(g, std::move(shape));
  for (T& x : t.data()) {
    if (x >= T(0) && x < T(margin)) x += T(margin);
    if (x < T(0) && x > T(-margin)) x -= T(margin);
  }
  return t;
}

inline pstk::IntMap random_labels(std::mt19937_64& g, int n, int h, int w,
                                  int num_classes) {
  pstk::IntMap m(n, h, w);
  for (int32_t& v : m.v) v = static_cast<int32_t>(g() % static_cast<uint64_t>(num_classes));
  return m;
}

}  // namespace testutil
