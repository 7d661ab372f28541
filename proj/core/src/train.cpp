#include "surfgest/train.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

#include "json.hpp"
#include "surfgest/error.hpp"

namespace surfgest::train {

using nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("train: eps must be > 0");
}

template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, Moments<T>& moments, std::size_t t,
                const TrainConfig& cfg, std::span<const model::ParamTensor> layout) {
  if (params.size() != grads.size() || moments.m.size() != params.size() || moments.v.size() != params.size()) {
    throw ShapeError("adamw_step: parameter, gradient and moment sizes differ");
  }
  if (t < 1) throw InvalidArgumentError("adamw_step: step counter starts at 1");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (std::isfinite(static_cast<double>(grads[i]))) continue;
    std::string name = "param[" + std::to_string(i) + "]";
    for (const auto& p : layout) {
      if (i >= p.offset && i < p.offset + p.size()) name = p.name + "[" + std::to_string(i - p.offset) + "]";
    }
    throw TrainingError("non-finite gradient in " + name);
  }

  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  const double lr = cfg.learning_rate;

  auto update = [&](std::size_t begin, std::size_t end, bool decay) {
    const double wd = decay ? cfg.weight_decay : 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      const double g = static_cast<double>(grads[i]);
      const double m = b1 * static_cast<double>(moments.m[i]) + (1.0 - b1) * g;
      const double v = b2 * static_cast<double>(moments.v[i]) + (1.0 - b2) * g * g;
      moments.m[i] = static_cast<T>(m);
      moments.v[i] = static_cast<T>(v);
      const double p = static_cast<double>(params[i]);
      params[i] = static_cast<T>(p - lr * wd * p - lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
    }
  };
  if (layout.empty()) {
    update(0, params.size(), true);
  } else {
    for (const auto& p : layout) update(p.offset, p.offset + p.size(), p.decay);
  }
}

template void adamw_step<float>(std::span<float>, std::span<const float>, Moments<float>&, std::size_t,
                                const TrainConfig&, std::span<const model::ParamTensor>);
template void adamw_step<double>(std::span<double>, std::span<const double>, Moments<double>&, std::size_t,
                                 const TrainConfig&, std::span<const model::ParamTensor>);

FoldMetrics metrics_from_predictions(std::span<const int> predicted, std::span<const int> truth,
                                     std::size_t num_classes) {
  if (truth.empty()) throw ConfigError("evaluate: empty test set");
  if (predicted.size() != truth.size()) throw ShapeError("evaluate: prediction and label counts differ");
  FoldMetrics m;
  m.test_count = truth.size();
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    m.confusion.at(static_cast<std::size_t>(truth[i])).at(static_cast<std::size_t>(predicted[i]))++;
  }
  std::size_t correct = 0;
  for (std::size_t k = 0; k < num_classes; ++k) correct += m.confusion[k][k];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  m.class_precision.assign(num_classes, 0.0);
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::size_t col = 0;
    for (std::size_t r = 0; r < num_classes; ++r) col += m.confusion[r][k];
    if (col > 0) m.class_precision[k] = static_cast<double>(m.confusion[k][k]) / static_cast<double>(col);
  }
  m.macro_precision = std::accumulate(m.class_precision.begin(), m.class_precision.end(), 0.0) /
                      static_cast<double>(num_classes);
  return m;
}

FoldMetrics evaluate(const model::SepCnn<float>& model, const WindowSet& windows) {
  if (windows.size() == 0) throw ConfigError("evaluate: empty test set");
  const std::size_t K = model.config().num_classes;
  constexpr std::size_t kChunk = 256;
  std::vector<int> predicted;
  predicted.reserve(windows.size());
  for (std::size_t start = 0; start < windows.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, windows.size() - start);
    const auto logits = model.predict({windows.data.data() + start * windows.stride(), n * windows.stride()}, n);
    for (std::size_t b = 0; b < n; ++b) {
      const float* z = logits.data() + b * K;
      predicted.push_back(static_cast<int>(std::max_element(z, z + K) - z));
    }
  }
  auto m = metrics_from_predictions(predicted, windows.labels, K);
  m.param_count = model.count_parameters();
  return m;
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(fold_index), 0x5eedu};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

FoldResult train_fold(const model::SepCnnConfig& model_cfg, const WindowSet& windows, const Fold& fold,
                      const TrainConfig& cfg) {
  cfg.validate();
  const std::set<SessionKey> train_keys(fold.train.begin(), fold.train.end());
  for (const auto& k : fold.test) {
    if (train_keys.contains(k)) {
      throw ConfigError("fold leaks session (" + std::to_string(k.participant) + ", " + std::to_string(k.session) +
                        ") into both train and test");
    }
  }
  const auto train_idx = windows.select(fold.train);
  const auto test_idx = windows.select(fold.test);
  if (train_idx.empty()) throw ConfigError("fold has no training windows");
  if (test_idx.empty()) throw ConfigError("fold has no test windows");
  if (windows.channels != model_cfg.in_channels || windows.length != model_cfg.input_length) {
    throw ShapeError("windows are " + std::to_string(windows.channels) + "x" + std::to_string(windows.length) +
                     ", model expects " + std::to_string(model_cfg.in_channels) + "x" +
                     std::to_string(model_cfg.input_length));
  }

  FoldResult result{{}, {}, model::SepCnn<float>::build(model_cfg, cfg.seed)};
  auto& net = result.model;
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Moments<float> moments(net.count_parameters());
  std::vector<float> grad(net.count_parameters());
  std::vector<float> batch;
  std::vector<int> labels;
  std::vector<std::size_t> order = train_idx;
  const std::size_t stride = windows.stride();
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      batch.resize(n * stride);
      labels.resize(n);
      for (std::size_t b = 0; b < n; ++b) {
        const auto s = windows.sample(order[start + b]);
        std::copy(s.begin(), s.end(), batch.begin() + static_cast<std::ptrdiff_t>(b * stride));
        labels[b] = windows.labels[order[start + b]];
      }
      loss_sum += net.loss_and_grad(batch, labels, grad, rng);
      adamw_step<float>(net.params(), grad, moments, ++step, cfg, net.layout());
      ++batches;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  if (cfg.recalibrate_bn) {
    const auto train_set = windows.subset(train_idx);
    net.recalibrate_statistics(train_set.data, train_set.size());
  }
  result.metrics = evaluate(net, windows.subset(test_idx));
  return result;
}

CvSummary summarize(std::vector<FoldMetrics> folds) {
  CvSummary s;
  s.folds = std::move(folds);
  if (s.folds.empty()) return s;
  const double n = static_cast<double>(s.folds.size());
  for (const auto& f : s.folds) {
    s.mean_accuracy += f.accuracy / n;
    s.mean_precision += f.macro_precision / n;
  }
  for (const auto& f : s.folds) {
    s.std_accuracy += (f.accuracy - s.mean_accuracy) * (f.accuracy - s.mean_accuracy) / n;
    s.std_precision += (f.macro_precision - s.mean_precision) * (f.macro_precision - s.mean_precision) / n;
  }
  s.std_accuracy = std::sqrt(s.std_accuracy);
  s.std_precision = std::sqrt(s.std_precision);
  return s;
}

CvSummary cross_validate(const model::SepCnnConfig& model_cfg, const WindowSet& windows, const SplitPlan& plan,
                         const TrainConfig& cfg, std::size_t jobs, const FoldCallback& on_fold) {
  std::vector<FoldMetrics> metrics(plan.folds.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < plan.folds.size(); k = next++) {
      try {
        TrainConfig fold_cfg = cfg;
        fold_cfg.seed = fold_seed(cfg.seed, k);
        auto result = train_fold(model_cfg, windows, plan.folds[k], fold_cfg);
        metrics[k] = result.metrics;
        if (on_fold) on_fold(k, result);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = plan.folds.size();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, plan.folds.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return summarize(std::move(metrics));
}

namespace {

json model_json(const model::SepCnnConfig& c) {
  return {{"in_channels", c.in_channels}, {"num_blocks", c.num_blocks},   {"block_width", c.block_width},
          {"kernel_size", c.kernel_size}, {"dropout_p", c.dropout_p},     {"pool_out", c.pool_out},
          {"classifier_hidden", c.classifier_hidden}, {"num_classes", c.num_classes},
          {"input_length", c.input_length}};
}

}  // namespace

void write_metrics_report(const std::filesystem::path& path, const std::string& split,
                          const model::SepCnnConfig& model_cfg, const TrainConfig& cfg, const CvSummary& summary) {
  json folds = json::array();
  for (const auto& f : summary.folds) {
    folds.push_back({{"accuracy", f.accuracy},
                     {"macro_precision", f.macro_precision},
                     {"class_precision", f.class_precision},
                     {"confusion", f.confusion},
                     {"param_count", f.param_count},
                     {"test_count", f.test_count}});
  }
  const json doc = {
      {"split", split},
      {"model", model_json(model_cfg)},
      {"train",
       {{"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"learning_rate", cfg.learning_rate},
        {"weight_decay", cfg.weight_decay},
        {"seed", cfg.seed}}},
      {"param_count", model::count_parameters(model_cfg)},
      {"folds", std::move(folds)},
      {"accuracy", {{"mean", summary.mean_accuracy}, {"std", summary.std_accuracy}}},
      {"precision", {{"mean", summary.mean_precision}, {"std", summary.std_precision}}}};
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << doc.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

void write_confusion_csv(const std::filesystem::path& path, const CvSummary& summary) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t K = summary.folds.empty() ? 0 : summary.folds.front().confusion.size();
  out << "fold,true_class";
  for (std::size_t k = 0; k < K; ++k) out << ",pred_" << gesture_name(static_cast<GestureClass>(k));
  out << '\n';
  for (std::size_t f = 0; f < summary.folds.size(); ++f) {
    for (std::size_t r = 0; r < K; ++r) {
      out << f << ',' << gesture_name(static_cast<GestureClass>(r));
      for (std::size_t c = 0; c < K; ++c) out << ',' << summary.folds[f].confusion[r][c];
      out << '\n';
    }
  }
}

}  // namespace surfgest::train
