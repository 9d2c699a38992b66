#include "parsestack/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>

#include "parsestack/io.hpp"
#include "parsestack/rng.hpp"

namespace pstk {

void TrainConfig::validate(int num_levels) const {
  check(epochs >= 0, "train config: epochs must be nonnegative");
  check(batch_size >= 1, "train config: batch_size must be positive");
  check(lr >= 0.0, "train config: lr must be nonnegative");
  check(momentum >= 0.0 && momentum < 1.0, "train config: momentum must be in [0,1)");
  const int expected = mode == ArchMode::standalone ? 1 : num_levels;
  if (!loss_weights.empty()) {
    check(static_cast<int>(loss_weights.size()) == expected,
          cat("train config: loss_weights length ", loss_weights.size(),
              " does not match level count ", expected));
    for (double w : loss_weights)
      check(w > 0.0, "train config: loss weights must be positive");
  }
  check(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0,
        "train config: lr_decay_factor must be in (0,1]");
}

template <typename T>
LossResult<T> hierarchical_loss(const std::vector<Tensor<T>>& scores,
                                const std::vector<IntMap>& labels,
                                const std::vector<double>& weights) {
  check(scores.size() == labels.size(),
        cat("hierarchical_loss: ", scores.size(), " score maps vs ", labels.size(),
            " label maps"));
  check(weights.size() == scores.size(),
        cat("hierarchical_loss: ", weights.size(), " weights vs ", scores.size(),
            " levels"));
  bool any_positive = false;
  for (double w : weights) {
    check(w >= 0.0, "hierarchical_loss: weights must be nonnegative");
    if (w > 0.0) any_positive = true;
  }
  check(any_positive, "hierarchical_loss: at least one weight must be positive");

  LossResult<T> res;
  res.per_level.reserve(scores.size());
  Tensor<T> total;
  for (size_t i = 0; i < scores.size(); ++i) {
    Tensor<T> up = upsample_bilinear(scores[i], labels[i].h, labels[i].w);
    Tensor<T> li = softmax_cross_entropy(up, labels[i]);
    res.per_level.push_back(static_cast<double>(li.item()));
    Tensor<T> wi = scale(li, weights[i]);
    total = total.defined() ? add(total, wi) : wi;
  }
  res.total = total;
  return res;
}

namespace {

template <typename T>
Tensor<T> stack_images(const Dataset<T>& ds, const std::vector<int64_t>& idx) {
  const int64_t n = static_cast<int64_t>(idx.size());
  const int64_t chw = 3LL * ds.h * ds.w;
  Tensor<T> batch = Tensor<T>::zeros({n, 3, ds.h, ds.w});
  for (int64_t i = 0; i < n; ++i)
    std::copy(ds.samples[static_cast<size_t>(idx[static_cast<size_t>(i)])].image.data().begin(),
              ds.samples[static_cast<size_t>(idx[static_cast<size_t>(i)])].image.data().end(),
              batch.data().begin() + i * chw);
  return batch;
}

template <typename T>
IntMap stack_labels(const Dataset<T>& ds, const std::vector<int64_t>& idx, int level) {
  const int64_t n = static_cast<int64_t>(idx.size());
  IntMap out(static_cast<int>(n), ds.h, ds.w);
  const int64_t plane = static_cast<int64_t>(ds.h) * ds.w;
  for (int64_t i = 0; i < n; ++i) {
    const IntMap& src =
        ds.samples[static_cast<size_t>(idx[static_cast<size_t>(i)])].levels[static_cast<size_t>(level)];
    std::copy(src.v.begin(), src.v.end(), out.v.begin() + i * plane);
  }
  return out;
}

}  // namespace

template <typename T>
MetricsReport evaluate(const Model<T>& model, const Dataset<T>& ds) {
  check(ds.size() > 0, "evaluate: empty dataset");
  const std::vector<int> levels = model.output_levels();
  std::vector<ConfusionMatrix> cms;
  for (int lvl : levels) cms.emplace_back(model.hierarchy.num_classes(lvl));

  uint64_t agree = 0, total_px = 0;
  const bool all_levels =
      static_cast<int>(levels.size()) == model.hierarchy.num_levels();
  for (const Sample<T>& s : ds.samples) {
    Tensor<T> img = Tensor<T>::zeros({1, 3, ds.h, ds.w});
    img.data() = s.image.data();
    LabelMapSet preds = predict(model, img);
    for (size_t k = 0; k < levels.size(); ++k) {
      const int lvl = levels[k];
      cms[k] += confusion(preds[k], s.levels[static_cast<size_t>(lvl)],
                          model.hierarchy.num_classes(lvl));
    }
    if (all_levels) consistency_counts(preds, model.hierarchy, &agree, &total_px);
  }

  MetricsReport rep;
  for (ConfusionMatrix& cm : cms) {
    LevelMetrics lm;
    lm.miou = miou(cm);
    lm.class_iou = per_class_iou(cm);
    lm.atr = atr_metrics(cm, 0);
    lm.cm = cm;
    rep.levels.push_back(std::move(lm));
  }
  rep.consistency_ratio =
      total_px > 0 ? static_cast<double>(agree) / static_cast<double>(total_px) : 1.0;
  return rep;
}

template <typename T>
MetricsReport evaluate_standalone_set(const std::vector<Model<T>>& models,
                                      const Dataset<T>& ds) {
  check(!models.empty(), "evaluate_standalone_set: no models");
  const LabelHierarchy& hier = models[0].hierarchy;
  check(static_cast<int>(models.size()) == hier.num_levels(),
        "evaluate_standalone_set: need one standalone model per level");
  for (int k = 0; k < static_cast<int>(models.size()); ++k)
    check(models[static_cast<size_t>(k)].mode == ArchMode::standalone &&
              models[static_cast<size_t>(k)].standalone_level == k,
          "evaluate_standalone_set: models must be standalone, one per level in order");

  std::vector<ConfusionMatrix> cms;
  for (int k = 0; k < hier.num_levels(); ++k) cms.emplace_back(hier.num_classes(k));
  uint64_t agree = 0, total_px = 0;
  for (const Sample<T>& s : ds.samples) {
    Tensor<T> img = Tensor<T>::zeros({1, 3, ds.h, ds.w});
    img.data() = s.image.data();
    LabelMapSet assembled;
    for (const Model<T>& m : models) assembled.push_back(predict(m, img)[0]);
    for (int k = 0; k < hier.num_levels(); ++k)
      cms[static_cast<size_t>(k)] +=
          confusion(assembled[static_cast<size_t>(k)], s.levels[static_cast<size_t>(k)],
                    hier.num_classes(k));
    consistency_counts(assembled, hier, &agree, &total_px);
  }
  MetricsReport rep;
  for (ConfusionMatrix& cm : cms) {
    LevelMetrics lm;
    lm.miou = miou(cm);
    lm.class_iou = per_class_iou(cm);
    lm.atr = atr_metrics(cm, 0);
    lm.cm = cm;
    rep.levels.push_back(std::move(lm));
  }
  rep.consistency_ratio =
      total_px > 0 ? static_cast<double>(agree) / static_cast<double>(total_px) : 1.0;
  return rep;
}

template <typename T>
TrainLog train(Model<T>& model, const Dataset<T>& train_set, const TrainConfig& cfg,
               const Dataset<T>* val_set, const std::string& snapshot_dir) {
  check(train_set.size() > 0, "train: empty dataset");
  cfg.validate(model.hierarchy.num_levels());
  check(cfg.mode == model.mode, "train: config mode does not match model mode");

  const std::vector<int> out_levels = model.output_levels();
  std::vector<double> weights = cfg.loss_weights;
  if (weights.empty()) weights.assign(out_levels.size(), 1.0);

  Sgd<T> opt(model.parameters());
  TrainLog log;
  Rng shuffle_rng(mix_seed(cfg.seed, 0x5AFFull));  // shuffle stream
  std::vector<int64_t> order(static_cast<size_t>(train_set.size()));
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);

  int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = cfg.lr;
    for (double frac : cfg.lr_decay_at)
      if (epoch >= static_cast<int>(frac * cfg.epochs)) lr *= cfg.lr_decay_factor;

    shuffle_rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      std::vector<int64_t> idx(order.begin() + static_cast<int64_t>(start),
                               order.begin() + static_cast<int64_t>(end));
      const auto t0 = std::chrono::steady_clock::now();

      TapeScope<T> scope;
      Tensor<T> images = stack_images(train_set, idx);
      std::vector<IntMap> labels;
      for (int lvl : out_levels) labels.push_back(stack_labels(train_set, idx, lvl));
      std::vector<Tensor<T>> scores = model.forward(images);
      LossResult<T> loss = hierarchical_loss(scores, labels, weights);
      const double total = static_cast<double>(loss.total.item());
      if (!std::isfinite(total))
        fail(cat("train: non-finite loss at step ", step, " (epoch ", epoch, ")"));
      backward(loss.total);
      opt.step(lr, cfg.momentum);

      StepRecord rec;
      rec.step = step++;
      rec.epoch = epoch;
      rec.lr = lr;
      rec.level_loss = loss.per_level;
      rec.total_loss = total;
      rec.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      log.steps.push_back(std::move(rec));
    }

    const bool last_epoch = epoch + 1 == cfg.epochs;
    if (val_set != nullptr &&
        (last_epoch || (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0)))
      log.evals.push_back({epoch, "val", evaluate(model, *val_set)});
    if (!snapshot_dir.empty() && cfg.snapshot_every > 0 &&
        (epoch + 1) % cfg.snapshot_every == 0)
      save_checkpoint(model, snapshot_dir + "/snapshot_epoch" +
                                 std::to_string(epoch + 1) + ".pstc");
  }
  return log;
}

template <typename T>
AblationResult run_ablation(const Dataset<T>& train_set, const Dataset<T>& val_set,
                            const EncoderConfig& enc, const StackedHeadConfig& heads,
                            const TrainConfig& base, const LabelHierarchy& hier) {
  AblationResult res;
  for (const LabelLevel& lvl : hier.levels) res.level_names.push_back(lvl.name);

  auto row_from_report = [&](const std::string& name, const MetricsReport& rep) {
    AblationRow row;
    row.strategy = name;
    for (const LevelMetrics& lm : rep.levels) row.level_miou.push_back(lm.miou);
    row.consistency = rep.consistency_ratio;
    return row;
  };

  // Standalone: one independent net per level under the same budget/seed.
  {
    std::vector<Model<T>> models;
    for (int k = 0; k < hier.num_levels(); ++k) {
      Model<T> m = build_model<T>(enc, heads, ArchMode::standalone, hier,
                                  mix_seed(base.seed, 100 + static_cast<uint64_t>(k)), k);
      TrainConfig cfg = base;
      cfg.mode = ArchMode::standalone;
      cfg.loss_weights = {1.0};
      train(m, train_set, cfg);
      models.push_back(std::move(m));
    }
    res.rows.push_back(row_from_report("standalone", evaluate_standalone_set(models, val_set)));
  }

  for (ArchMode mode :
       {ArchMode::stack_full, ArchMode::stack_fc, ArchMode::stack_fc_skip}) {
    Model<T> m = build_model<T>(enc, heads, mode, hier, base.seed);
    TrainConfig cfg = base;
    cfg.mode = mode;
    train(m, train_set, cfg);
    res.rows.push_back(row_from_report(to_string(mode), evaluate(m, val_set)));
  }
  return res;
}

#define PSTK_INSTANTIATE(T)                                                          \
  template LossResult<T> hierarchical_loss<T>(const std::vector<Tensor<T>>&,        \
                                              const std::vector<IntMap>&,           \
                                              const std::vector<double>&);          \
  template MetricsReport evaluate<T>(const Model<T>&, const Dataset<T>&);           \
  template MetricsReport evaluate_standalone_set<T>(const std::vector<Model<T>>&,   \
                                                    const Dataset<T>&);             \
  template TrainLog train<T>(Model<T>&, const Dataset<T>&, const TrainConfig&,      \
                             const Dataset<T>*, const std::string&);                \
  template AblationResult run_ablation<T>(const Dataset<T>&, const Dataset<T>&,     \
                                          const EncoderConfig&,                     \
                                          const StackedHeadConfig&,                 \
                                          const TrainConfig&, const LabelHierarchy&);

PSTK_INSTANTIATE(float)
PSTK_INSTANTIATE(double)
#undef PSTK_INSTANTIATE

}  // namespace pstk
