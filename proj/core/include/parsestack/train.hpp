#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "parsestack/geoscene.hpp"
#include "parsestack/metrics.hpp"
#include "parsestack/net.hpp"

namespace pstk {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 4;
  double lr = 0.05;
  double momentum = 0.9;
  std::vector<double> loss_weights;  // empty = equal weights 1.0
  uint64_t seed = 1;
  ArchMode mode = ArchMode::stack_fc_skip;
  int snapshot_every = 0;  // epochs; 0 disables periodic snapshots
  int eval_every = 0;      // epochs; 0 = final epoch only
  std::vector<double> lr_decay_at{0.6, 0.85};  // fractions of the epoch budget
  double lr_decay_factor = 0.5;

  void validate(int num_levels) const;
};

struct StepRecord {
  int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  std::vector<double> level_loss;
  double total_loss = 0.0;
  double wall_ms = 0.0;  // informational; never written to deterministic CSVs
};

struct EpochEval {
  int epoch = 0;
  std::string split;
  MetricsReport report;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochEval> evals;
};

template <typename T>
struct LossResult {
  Tensor<T> total;
  std::vector<double> per_level;
};

// Eq.-style weighted sum of per-level pixel-wise cross-entropies. Each score
// map is bilinearly upsampled to its label map's resolution first. Weights
// must be nonnegative with at least one positive entry.
template <typename T>
LossResult<T> hierarchical_loss(const std::vector<Tensor<T>>& scores,
                                const std::vector<IntMap>& labels,
                                const std::vector<double>& weights);

// Deterministic end-to-end training. val_set may be null. Non-finite loss
// aborts with the step index.
template <typename T>
TrainLog train(Model<T>& model, const Dataset<T>& train_set, const TrainConfig& cfg,
               const Dataset<T>* val_set = nullptr,
               const std::string& snapshot_dir = std::string());

// Full-dataset evaluation of a model's output levels.
template <typename T>
MetricsReport evaluate(const Model<T>& model, const Dataset<T>& ds);

// Evaluation of one independently trained standalone model per level,
// assembled into a single per-level report (plus cross-level consistency of
// the assembled prediction set).
template <typename T>
MetricsReport evaluate_standalone_set(const std::vector<Model<T>>& models,
                                      const Dataset<T>& ds);

struct AblationRow {
  std::string strategy;
  std::vector<double> level_miou;  // coarse -> fine
  double consistency = 0.0;
};

struct AblationResult {
  std::vector<std::string> level_names;
  std::vector<AblationRow> rows;  // standalone, stack_full, stack_fc, stack_fc_skip
};

// Trains the four strategies under identical budgets and seeds and evaluates
// them on the validation split.
template <typename T>
AblationResult run_ablation(const Dataset<T>& train_set, const Dataset<T>& val_set,
                            const EncoderConfig& enc, const StackedHeadConfig& heads,
                            const TrainConfig& base, const LabelHierarchy& hier);

}  // namespace pstk
