#pragma once

// Property suites shared between the unit tests and the acceptance gate.
// Each returns true on success and appends a diagnostic on failure.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "parsestack/hierarchy.hpp"
#include "parsestack/metrics.hpp"
#include "parsestack/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

namespace suites {

using pstk::IntMap;
using pstk::Tensor;

// ---------------------------------------------------------------------------
// Gradient suite: finite differences for every differentiable op.

inline bool gradient_suite(int instances, std::string* msg) {
  std::ostringstream err;
  bool ok = true;
  auto report = [&](const char* op, int k, const gradcheck::Result& r) {
    if (!r.ok) {
      ok = false;
      err << op << " instance " << k << ": " << r.detail << "\n";
    }
  };

  for (int k = 0; k < instances; ++k) {
    auto rng = testutil::make_rng(1000 + static_cast<uint64_t>(k));
    const int n = 1 + static_cast<int>(rng() % 2);
    const int cin = 1 + static_cast<int>(rng() % 3);
    const int cout = 1 + static_cast<int>(rng() % 3);
    const int h = 3 + static_cast<int>(rng() % 4);  // 3..6
    const int w = 3 + static_cast<int>(rng() % 4);
    const int ks = 1 + 2 * static_cast<int>(rng() % 2);  // 1 or 3
    const int pad = static_cast<int>(rng() % 2);
    const int stride = 1 + static_cast<int>(rng() % 2);

    // conv2d w.r.t. input, weight, bias
    {
      Tensor<double> x = testutil::random_tensor<double>(rng, {n, cin, h, w});
      Tensor<double> wt = testutil::random_tensor<double>(rng, {cout, cin, ks, ks});
      Tensor<double> b = testutil::random_tensor<double>(rng, {cout});
      Tensor<double> r = testutil::random_tensor<double>(
          rng, {n, cout, (h + 2 * pad - ks) / stride + 1, (w + 2 * pad - ks) / stride + 1});
      report("conv2d", k, gradcheck::check({x, wt, b}, [=]() {
               return pstk::sum_all(pstk::mul(pstk::conv2d(x, wt, b, stride, pad), r));
             }));
    }
    // relu (inputs kept away from the kink)
    {
      Tensor<double> x = testutil::off_zero_tensor<double>(rng, {n, cin, h, w});
      Tensor<double> r = testutil::random_tensor<double>(rng, {n, cin, h, w});
      report("relu", k, gradcheck::check({x}, [=]() {
               return pstk::sum_all(pstk::mul(pstk::relu(x), r));
             }));
    }
    // maxpool2d (distinct values so the argmax is stable under perturbation)
    {
      Tensor<double> x = testutil::distinct_tensor<double>(rng, {n, cin, h, w});
      const int win = 2;
      Tensor<double> r = testutil::random_tensor<double>(
          rng, {n, cin, (h - win) / 2 + 1, (w - win) / 2 + 1});
      report("maxpool2d", k, gradcheck::check({x}, [=]() {
               return pstk::sum_all(pstk::mul(pstk::maxpool2d(x, win, 2), r));
             }));
    }
    // upsample_bilinear
    {
      Tensor<double> x = testutil::random_tensor<double>(rng, {n, cin, h, w});
      const int oh = h + static_cast<int>(rng() % 5);
      const int ow = w + static_cast<int>(rng() % 5);
      Tensor<double> r = testutil::random_tensor<double>(rng, {n, cin, oh, ow});
      report("upsample", k, gradcheck::check({x}, [=]() {
               return pstk::sum_all(pstk::mul(pstk::upsample_bilinear(x, oh, ow), r));
             }));
    }
    // concat_channels
    {
      Tensor<double> a = testutil::random_tensor<double>(rng, {n, cin, h, w});
      Tensor<double> b = testutil::random_tensor<double>(rng, {n, cout, h, w});
      Tensor<double> r = testutil::random_tensor<double>(rng, {n, cin + cout, h, w});
      report("concat", k, gradcheck::check({a, b}, [=]() {
               return pstk::sum_all(pstk::mul(pstk::concat_channels<double>({a, b}), r));
             }));
    }
    // softmax_channels
    {
      Tensor<double> x = testutil::random_tensor<double>(rng, {n, 2 + cin, h, w}, -2, 2);
      Tensor<double> r = testutil::random_tensor<double>(rng, {n, 2 + cin, h, w});
      report("softmax", k, gradcheck::check({x}, [=]() {
               return pstk::sum_all(pstk::mul(pstk::softmax_channels(x), r));
             }));
    }
    // softmax_cross_entropy
    {
      const int classes = 2 + static_cast<int>(rng() % 4);
      Tensor<double> x = testutil::random_tensor<double>(rng, {n, classes, h, w}, -2, 2);
      IntMap labels = testutil::random_labels(rng, n, h, w, classes);
      report("cross_entropy", k, gradcheck::check({x}, [=]() {
               return pstk::softmax_cross_entropy(x, labels);
             }));
    }
    // composite graph: conv -> relu -> pool -> cross-entropy. Instances are
    // redrawn until the conv output sits clear of the relu kink and every
    // pool window has a distinct positive max (the excluded
    // nondifferentiability neighborhoods).
    {
      Tensor<double> x, wt, b;
      bool smooth = false;
      for (int attempt = 0; attempt < 200 && !smooth; ++attempt) {
        x = testutil::random_tensor<double>(rng, {1, cin, 6, 6});
        wt = testutil::random_tensor<double>(rng, {3, cin, 3, 3});
        b = testutil::random_tensor<double>(rng, {3});
        Tensor<double> y = pstk::conv2d(x, wt, b, 1, 1);
        smooth = true;
        for (double v : y.data())
          if (std::fabs(v) < 5e-3) smooth = false;
        const double* p = y.ptr();
        for (int ch = 0; ch < 3 && smooth; ++ch)
          for (int oy = 0; oy < 3 && smooth; ++oy)
            for (int ox = 0; ox < 3 && smooth; ++ox) {
              double top = -1e300, second = -1e300;
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                  const double rv =
                      std::max(0.0, p[(ch * 6 + oy * 2 + dy) * 6 + ox * 2 + dx]);
                  if (rv > top) {
                    second = top;
                    top = rv;
                  } else if (rv > second) {
                    second = rv;
                  }
                }
              if (top > 0.0 && top - second < 5e-3) smooth = false;
            }
      }
      if (smooth) {
        IntMap labels = testutil::random_labels(rng, 1, 3, 3, 3);
        report("composite", k, gradcheck::check({x, wt, b}, [=]() {
                 Tensor<double> y =
                     pstk::maxpool2d(pstk::relu(pstk::conv2d(x, wt, b, 1, 1)), 2, 2);
                 return pstk::softmax_cross_entropy(y, labels);
               }));
      }
    }
    if (!ok) break;
  }
  if (!ok && msg) *msg = err.str();
  return ok;
}

// ---------------------------------------------------------------------------
// Oracle suite: brute-force reference equivalence within 1e-12.

inline bool oracle_suite(int instances, std::string* msg) {
  std::ostringstream err;
  auto close = [](double a, double b) { return std::fabs(a - b) < 1e-12; };

  for (int k = 0; k < instances; ++k) {
    auto rng = testutil::make_rng(9000 + static_cast<uint64_t>(k));
    const int n = 1 + static_cast<int>(rng() % 2);
    const int c = 1 + static_cast<int>(rng() % 3);
    const int h = 2 + static_cast<int>(rng() % 5);
    const int w = 2 + static_cast<int>(rng() % 5);

    {  // conv2d
      const int cout = 1 + static_cast<int>(rng() % 3);
      const int ks = 1 + 2 * static_cast<int>(rng() % 2);
      const int pad = static_cast<int>(rng() % 2);
      const int stride = 1 + static_cast<int>(rng() % 2);
      if (h + 2 * pad >= ks && w + 2 * pad >= ks) {
        Tensor<double> x = testutil::random_tensor<double>(rng, {n, c, h, w});
        Tensor<double> wt = testutil::random_tensor<double>(rng, {cout, c, ks, ks});
        Tensor<double> b = testutil::random_tensor<double>(rng, {cout});
        Tensor<double> out = pstk::conv2d(x, wt, b, stride, pad);
        int oh = 0, ow = 0;
        std::vector<double> ref = oracle::conv2d(x.data(), n, c, h, w, wt.data(), cout,
                                                 ks, ks, b.data(), stride, pad, &oh, &ow);
        for (size_t i = 0; i < ref.size(); ++i)
          if (!close(out.data()[i], ref[i])) {
            if (msg) *msg = "conv2d diverges from oracle";
            return false;
          }
      }
    }
    {  // maxpool2d
      const int win = 2;
      Tensor<double> x = testutil::random_tensor<double>(rng, {n, c, h, w});
      Tensor<double> out = pstk::maxpool2d(x, win, 1);
      int oh = 0, ow = 0;
      std::vector<double> ref = oracle::maxpool2d(x.data(), n, c, h, w, win, 1, &oh, &ow);
      for (size_t i = 0; i < ref.size(); ++i)
        if (out.data()[i] != ref[i]) {
          if (msg) *msg = "maxpool2d diverges from oracle";
          return false;
        }
    }
    {  // upsample
      const int oh = h + static_cast<int>(rng() % 6);
      const int ow = w + static_cast<int>(rng() % 6);
      Tensor<double> x = testutil::random_tensor<double>(rng, {n, c, h, w});
      Tensor<double> out = pstk::upsample_bilinear(x, oh, ow);
      std::vector<double> ref = oracle::upsample_bilinear(x.data(), n, c, h, w, oh, ow);
      for (size_t i = 0; i < ref.size(); ++i)
        if (!close(out.data()[i], ref[i])) {
          if (msg) *msg = "upsample_bilinear diverges from oracle";
          return false;
        }
    }
    {  // cross entropy
      const int classes = 2 + static_cast<int>(rng() % 5);
      Tensor<double> x = testutil::random_tensor<double>(rng, {n, classes, h, w}, -3, 3);
      IntMap labels = testutil::random_labels(rng, n, h, w, classes);
      const double got = pstk::softmax_cross_entropy(x, labels).item();
      const double ref = oracle::cross_entropy(x.data(), n, classes, h, w, labels.v);
      if (!close(got, ref)) {
        if (msg) *msg = "softmax_cross_entropy diverges from oracle";
        return false;
      }
    }
    {  // miou + atr on random confusion matrices
      const int classes = 2 + static_cast<int>(rng() % 5);
      pstk::ConfusionMatrix cm(classes);
      std::vector<uint64_t> raw(static_cast<size_t>(classes) * classes, 0);
      for (int g = 0; g < classes; ++g)
        for (int p = 0; p < classes; ++p) {
          const uint64_t v = rng() % 7;  // zeros included: absent classes occur
          raw[static_cast<size_t>(g) * classes + p] = v;
          cm.at(g, p) = v;
          cm.total += v;
        }
      bool any = false;
      for (uint64_t v : raw) any = any || v > 0;
      if (!any) continue;
      for (bool absent_zero : {false, true})
        if (!close(pstk::miou(cm, absent_zero), oracle::miou(raw, classes, absent_zero))) {
          if (msg) *msg = "miou diverges from oracle";
          return false;
        }
      const pstk::AtrMetrics got = pstk::atr_metrics(cm, 0);
      const oracle::AtrRef ref = oracle::atr(raw, classes, 0);
      if (!close(got.acc, ref.acc) || got.fg_acc.has_value() != ref.fg_defined) {
        if (msg) *msg = "atr acc diverges from oracle";
        return false;
      }
      if (ref.fg_defined &&
          (!close(*got.fg_acc, ref.fg_acc) || !close(*got.avg_prec, ref.avg_prec) ||
           !close(*got.avg_recall, ref.avg_recall) || !close(*got.avg_f1, ref.avg_f1))) {
        if (msg) *msg = "atr foreground metrics diverge from oracle";
        return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Hierarchy suite: randomized taxonomies.

inline pstk::LabelHierarchy random_hierarchy(std::mt19937_64& rng) {
  const int levels = 1 + static_cast<int>(rng() % 4);
  std::vector<int> counts(static_cast<size_t>(levels));
  int c = 2 + static_cast<int>(rng() % 3);
  for (int k = 0; k < levels; ++k) {
    counts[static_cast<size_t>(k)] = c;
    c += static_cast<int>(rng() % 4);  // nondecreasing, equality allowed
  }
  pstk::LabelHierarchy h;
  for (int k = 0; k < levels; ++k) {
    pstk::LabelLevel lvl;
    lvl.name = "level" + std::to_string(k);
    for (int i = 0; i < counts[static_cast<size_t>(k)]; ++i)
      lvl.class_names.push_back(i == 0 ? "background" : "c" + std::to_string(i));
    h.levels.push_back(std::move(lvl));
  }
  for (int k = 0; k < levels - 1; ++k) {
    const int coarse = counts[static_cast<size_t>(k)];
    const int fine = counts[static_cast<size_t>(k + 1)];
    std::vector<int32_t>& m = h.levels[static_cast<size_t>(k)].merge_from_finer;
    m.assign(static_cast<size_t>(fine), 0);
    // Slots 0..coarse-1 carry a permutation fixing 0, which gives totality,
    // surjectivity and bg->bg by construction; remaining slots map anywhere.
    std::vector<int32_t> perm(static_cast<size_t>(coarse));
    for (int i = 0; i < coarse; ++i) perm[static_cast<size_t>(i)] = i;
    for (int i = coarse - 1; i > 1; --i)
      std::swap(perm[static_cast<size_t>(i)],
                perm[static_cast<size_t>(1 + static_cast<int>(rng() % static_cast<uint64_t>(i)))]);
    for (int i = 0; i < coarse; ++i) m[static_cast<size_t>(i)] = perm[static_cast<size_t>(i)];
    for (int i = coarse; i < fine; ++i)
      m[static_cast<size_t>(i)] = static_cast<int32_t>(rng() % static_cast<uint64_t>(coarse));
  }
  pstk::validate(h);
  return h;
}

inline bool hierarchy_suite(int cases, std::string* msg) {
  for (int k = 0; k < cases; ++k) {
    auto rng = testutil::make_rng(5000 + static_cast<uint64_t>(k));
    pstk::LabelHierarchy h;
    try {
      h = random_hierarchy(rng);
    } catch (const pstk::Error& e) {
      if (msg) *msg = std::string("random hierarchy invalid: ") + e.what();
      return false;
    }
    const int fine_classes = h.num_classes(h.finest());
    IntMap fine = testutil::random_labels(rng, 1, 3 + static_cast<int>(rng() % 6),
                                          3 + static_cast<int>(rng() % 6), fine_classes);

    // path composition == direct composed map
    for (int target = 0; target < h.num_levels(); ++target) {
      IntMap direct = pstk::merge_labels(fine, h, target);
      // step-by-step through intermediate levels
      IntMap step = fine;
      for (int lvl = h.finest() - 1; lvl >= target; --lvl) {
        const std::vector<int32_t>& m = h.levels[static_cast<size_t>(lvl)].merge_from_finer;
        for (int32_t& v : step.v) v = m[static_cast<size_t>(v)];
      }
      if (!(direct == step)) {
        if (msg) *msg = "merge composition mismatch";
        return false;
      }
    }

    // expand_sample consistency + class-set image property
    pstk::LabelMapSet set = pstk::expand_sample(fine, h);
    for (int lvl = 0; lvl + 1 < h.num_levels(); ++lvl) {
      const std::vector<int32_t>& m = h.levels[static_cast<size_t>(lvl)].merge_from_finer;
      for (size_t i = 0; i < fine.v.size(); ++i)
        if (set[static_cast<size_t>(lvl)].v[i] !=
            m[static_cast<size_t>(set[static_cast<size_t>(lvl + 1)].v[i])]) {
          if (msg) *msg = "expand_sample adjacent-level inconsistency";
          return false;
        }
    }
    if (pstk::consistency(set, h) != 1.0) {
      if (msg) *msg = "consistency(expand_sample(x)) != 1";
      return false;
    }

    // .hier round trip
    pstk::LabelHierarchy back = pstk::hierarchy_from_text(pstk::hierarchy_to_text(h));
    if (pstk::hierarchy_to_text(back) != pstk::hierarchy_to_text(h) ||
        pstk::hierarchy_hash(back) != pstk::hierarchy_hash(h)) {
      if (msg) *msg = ".hier round trip not identical";
      return false;
    }

    // idempotence at the finest level
    IntMap same = pstk::merge_labels(fine, h, h.finest());
    if (!(same == fine)) {
      if (msg) *msg = "merge to finest level is not the identity";
      return false;
    }
  }
  return true;
}

}  // namespace suites
