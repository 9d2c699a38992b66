#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "parsestack/hierarchy.hpp"
#include "parsestack/intmap.hpp"

namespace pstk {

// Square count matrix, rows = groundtruth, cols = prediction.
struct ConfusionMatrix {
  int num_classes = 0;
  std::vector<uint64_t> counts;
  uint64_t total = 0;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(int c)
      : num_classes(c), counts(static_cast<size_t>(c) * c, 0) {}

  uint64_t& at(int gt, int pred) {
    return counts[static_cast<size_t>(gt) * num_classes + pred];
  }
  uint64_t at(int gt, int pred) const {
    return counts[static_cast<size_t>(gt) * num_classes + pred];
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
};

ConfusionMatrix confusion(const IntMap& pred, const IntMap& gt, int num_classes);

// Mean over classes of diag / (row + col - diag). Classes absent from both
// groundtruth and prediction are excluded from the mean unless
// count_absent_as_zero is set. Errors when every class is absent.
double miou(const ConfusionMatrix& cm, bool count_absent_as_zero = false);

std::vector<double> per_class_iou(const ConfusionMatrix& cm);

// ATR-style pixel criteria. Foreground metrics are left unset when the
// groundtruth contains no foreground pixels.
struct AtrMetrics {
  double acc = 0.0;
  std::optional<double> fg_acc, avg_prec, avg_recall, avg_f1;
};

AtrMetrics atr_metrics(const ConfusionMatrix& cm, int background_index = 0);

// Fraction of pixels whose finer prediction, merged one level up, agrees
// with the coarser prediction; averaged over adjacent level pairs. 1.0 for a
// single-level set.
double consistency(const LabelMapSet& preds, const LabelHierarchy& h);

// Raw agree/total pixel counts behind consistency(); exact accumulation
// across samples.
void consistency_counts(const LabelMapSet& preds, const LabelHierarchy& h,
                        uint64_t* agree, uint64_t* total);

struct LevelMetrics {
  double miou = 0.0;
  std::vector<double> class_iou;  // NaN for absent classes
  AtrMetrics atr;
  ConfusionMatrix cm;
};

struct MetricsReport {
  std::vector<LevelMetrics> levels;
  double consistency_ratio = 1.0;
};

}  // namespace pstk
