#include "parsestack/metrics.hpp"

#include <cmath>
#include <limits>

#include "parsestack/common.hpp"

namespace pstk {

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  check(num_classes == o.num_classes, "confusion: class count mismatch in accumulation");
  for (size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
  total += o.total;
  return *this;
}

ConfusionMatrix confusion(const IntMap& pred, const IntMap& gt, int num_classes) {
  check(pred.n == gt.n && pred.h == gt.h && pred.w == gt.w,
        cat("confusion: shape mismatch [", pred.n, ",", pred.h, ",", pred.w,
            "] vs [", gt.n, ",", gt.h, ",", gt.w, "]"));
  ConfusionMatrix cm(num_classes);
  for (size_t i = 0; i < gt.v.size(); ++i) {
    const int32_t g = gt.v[i], p = pred.v[i];
    if (g < 0 || g >= num_classes || p < 0 || p >= num_classes) {
      const int64_t plane = static_cast<int64_t>(gt.h) * gt.w;
      const int64_t px = static_cast<int64_t>(i);
      fail(cat("confusion: label out of range [0,", num_classes, ") at (n=",
               px / plane, ",y=", (px % plane) / gt.w, ",x=", px % gt.w,
               "): gt=", g, " pred=", p));
    }
    ++cm.at(g, p);
    ++cm.total;
  }
  return cm;
}

std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
  const int C = cm.num_classes;
  std::vector<double> iou(static_cast<size_t>(C),
                          std::numeric_limits<double>::quiet_NaN());
  for (int c = 0; c < C; ++c) {
    uint64_t row = 0, col = 0;
    for (int j = 0; j < C; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const uint64_t inter = cm.at(c, c);
    const uint64_t uni = row + col - inter;
    if (uni > 0)
      iou[static_cast<size_t>(c)] =
          static_cast<double>(inter) / static_cast<double>(uni);
  }
  return iou;
}

double miou(const ConfusionMatrix& cm, bool count_absent_as_zero) {
  const std::vector<double> iou = per_class_iou(cm);
  double sum = 0.0;
  int n = 0;
  for (double v : iou) {
    if (std::isnan(v)) {
      if (count_absent_as_zero) ++n;
      continue;
    }
    sum += v;
    ++n;
  }
  check(n > 0, "miou: every class is absent from both groundtruth and prediction");
  return sum / n;
}

AtrMetrics atr_metrics(const ConfusionMatrix& cm, int background_index) {
  const int C = cm.num_classes;
  check(C >= 2, "atr_metrics: at least two classes required");
  check(background_index >= 0 && background_index < C,
        "atr_metrics: background index out of range");
  AtrMetrics m;
  uint64_t trace = 0;
  for (int c = 0; c < C; ++c) trace += cm.at(c, c);
  m.acc = cm.total > 0 ? static_cast<double>(trace) / static_cast<double>(cm.total) : 0.0;

  uint64_t fg_total = 0, fg_correct = 0;
  for (int c = 0; c < C; ++c) {
    if (c == background_index) continue;
    for (int j = 0; j < C; ++j) fg_total += cm.at(c, j);
    fg_correct += cm.at(c, c);
  }
  if (fg_total == 0) return m;  // foreground metrics undefined
  m.fg_acc = static_cast<double>(fg_correct) / static_cast<double>(fg_total);

  // Per-class precision/recall averaged over foreground classes; a class
  // with no predicted (resp. groundtruth) pixels contributes 0.
  double prec_sum = 0.0, rec_sum = 0.0, f1_sum = 0.0;
  int fg_classes = 0;
  for (int c = 0; c < C; ++c) {
    if (c == background_index) continue;
    uint64_t row = 0, col = 0;
    for (int j = 0; j < C; ++j) {
      row += cm.at(c, j);
      col += cm.at(j, c);
    }
    const double tp = static_cast<double>(cm.at(c, c));
    const double prec = col > 0 ? tp / static_cast<double>(col) : 0.0;
    const double rec = row > 0 ? tp / static_cast<double>(row) : 0.0;
    const double f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
    prec_sum += prec;
    rec_sum += rec;
    f1_sum += f1;
    ++fg_classes;
  }
  m.avg_prec = prec_sum / fg_classes;
  m.avg_recall = rec_sum / fg_classes;
  m.avg_f1 = f1_sum / fg_classes;
  return m;
}

void consistency_counts(const LabelMapSet& preds, const LabelHierarchy& h,
                        uint64_t* agree, uint64_t* total) {
  check(static_cast<int>(preds.size()) == h.num_levels(),
        "consistency: prediction count does not match hierarchy level count");
  for (size_t k = 1; k < preds.size(); ++k)
    check(preds[k].n == preds[0].n && preds[k].h == preds[0].h && preds[k].w == preds[0].w,
          "consistency: prediction shapes differ across levels");
  for (int k = 0; k < h.num_levels() - 1; ++k) {
    const std::vector<int32_t>& step = h.levels[static_cast<size_t>(k)].merge_from_finer;
    const IntMap& coarse = preds[static_cast<size_t>(k)];
    const IntMap& fine = preds[static_cast<size_t>(k + 1)];
    for (size_t i = 0; i < fine.v.size(); ++i) {
      const int32_t f = fine.v[i];
      check(f >= 0 && f < static_cast<int32_t>(step.size()),
            "consistency: finer prediction out of range");
      if (step[static_cast<size_t>(f)] == coarse.v[i]) ++*agree;
      ++*total;
    }
  }
}

double consistency(const LabelMapSet& preds, const LabelHierarchy& h) {
  uint64_t agree = 0, total = 0;
  consistency_counts(preds, h, &agree, &total);
  return total > 0 ? static_cast<double>(agree) / static_cast<double>(total) : 1.0;
}

}  // namespace pstk
