#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "surfgest/dataset.hpp"
#include "surfgest/model.hpp"

namespace surfgest::train {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  // After the last epoch, re-estimate batch-norm running statistics over the
  // training windows in eval mode. Dropout ahead of each later block inflates
  // the momentum-tracked variances; off keeps them as tracked.
  bool recalibrate_bn = true;

  void validate() const;
};

// First and second moment estimates, one entry per parameter.
template <typename T>
struct Moments {
  std::vector<T> m;
  std::vector<T> v;

  explicit Moments(std::size_t n = 0) : m(n, T(0)), v(n, T(0)) {}
};

// One decoupled-weight-decay Adam update at step t >= 1:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr*wd*p - lr * m_hat / (sqrt(v_hat) + eps)
// Decay applies to tensors flagged in layout; with an empty layout every
// parameter decays. A non-finite gradient throws TrainingError naming the
// parameter, before anything is modified.
template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, Moments<T>& moments, std::size_t t,
                const TrainConfig& cfg, std::span<const model::ParamTensor> layout = {});

struct FoldMetrics {
  double accuracy = 0.0;
  double macro_precision = 0.0;
  std::vector<double> class_precision;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::size_t param_count = 0;
  std::size_t test_count = 0;

  bool operator==(const FoldMetrics&) const = default;
};

// Classes that are never predicted contribute precision 0 to the macro mean.
FoldMetrics metrics_from_predictions(std::span<const int> predicted, std::span<const int> truth,
                                     std::size_t num_classes);

// Eval-mode argmax over the model's logits. Throws ConfigError on an empty set.
FoldMetrics evaluate(const model::SepCnn<float>& model, const WindowSet& windows);

struct FoldResult {
  FoldMetrics metrics;
  std::vector<double> epoch_loss;  // mean training loss per epoch
  model::SepCnn<float> model;
};

// Trains a fresh model on the fold's train sessions and evaluates it on the
// test sessions. Throws ConfigError if the partitions overlap or either side
// has no windows. Deterministic for a fixed seed.
FoldResult train_fold(const model::SepCnnConfig& model_cfg, const WindowSet& windows, const Fold& fold,
                      const TrainConfig& cfg);

// Seed for fold k derived from the run seed.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold_index);

struct CvSummary {
  std::vector<FoldMetrics> folds;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation
  double mean_precision = 0.0;
  double std_precision = 0.0;
};

CvSummary summarize(std::vector<FoldMetrics> folds);

using FoldCallback = std::function<void(std::size_t fold_index, const FoldResult&)>;

// Trains every fold of the plan, up to jobs at a time. Results do not depend
// on jobs. on_fold runs on the worker thread after each fold finishes.
CvSummary cross_validate(const model::SepCnnConfig& model_cfg, const WindowSet& windows, const SplitPlan& plan,
                         const TrainConfig& cfg, std::size_t jobs = 1, const FoldCallback& on_fold = {});

// JSON metrics report: config, per-fold metrics, mean and std across folds.
void write_metrics_report(const std::filesystem::path& path, const std::string& split,
                          const model::SepCnnConfig& model_cfg, const TrainConfig& cfg, const CvSummary& summary);
// One CSV row per (fold, true class) with the predicted-class counts.
void write_confusion_csv(const std::filesystem::path& path, const CvSummary& summary);

}  // namespace surfgest::train
