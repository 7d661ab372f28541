#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "surfgest/error.hpp"
#include "surfgest/train.hpp"

namespace surfgest {
namespace {

using train::Moments;
using train::TrainConfig;

TEST(AdamW, SingleStepWithoutDecay) {
  std::vector<double> p{1.0}, g{1.0};
  Moments<double> m(1);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.0;
  train::adamw_step<double>(p, g, m, 1, cfg);
  EXPECT_NEAR(p[0], 0.9, 1e-8);
  EXPECT_NEAR(m.m[0], 0.1, 1e-15);
  EXPECT_NEAR(m.v[0], 0.001, 1e-15);
}

TEST(AdamW, SingleStepWithDecoupledDecay) {
  std::vector<double> p{1.0}, g{1.0};
  Moments<double> m(1);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.01;
  train::adamw_step<double>(p, g, m, 1, cfg);
  EXPECT_NEAR(p[0], 0.899, 1e-8);
}

TEST(AdamW, ZeroGradientIsAFixedPoint) {
  std::vector<double> p{0.5, -2.0, 3.0}, g(3, 0.0);
  const auto before = p;
  Moments<double> m(3);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  for (std::size_t t = 1; t <= 5; ++t) train::adamw_step<double>(p, g, m, t, cfg);
  EXPECT_EQ(p, before);
}

TEST(AdamW, NoDecayReducesToAdam) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> d;
  const std::size_t n = 257;
  std::vector<double> p(n), ref(n), mr(n, 0.0), vr(n, 0.0);
  for (auto& x : p) x = d(rng);
  ref = p;
  Moments<double> m(n);
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  cfg.learning_rate = 3e-3;
  for (std::size_t t = 1; t <= 20; ++t) {
    std::vector<double> g(n);
    for (auto& x : g) x = d(rng);
    train::adamw_step<double>(p, g, m, t, cfg);
    for (std::size_t i = 0; i < n; ++i) {
      mr[i] = 0.9 * mr[i] + 0.1 * g[i];
      vr[i] = 0.999 * vr[i] + 0.001 * g[i] * g[i];
      const double mh = mr[i] / (1.0 - std::pow(0.9, t));
      const double vh = vr[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= 3e-3 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(p[i], ref[i], 1e-12);
}

TEST(AdamW, DecayOnlyOnFlaggedTensors) {
  std::vector<double> p{1.0, 1.0}, g{0.0, 0.0};
  Moments<double> m(2);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.5;
  std::vector<model::ParamTensor> layout{{"w", 0, {1}, true}, {"b", 1, {1}, false}};
  train::adamw_step<double>(p, g, m, 1, cfg, layout);
  EXPECT_DOUBLE_EQ(p[0], 0.95);
  EXPECT_DOUBLE_EQ(p[1], 1.0);
}

TEST(AdamW, NonFiniteGradientNamesParameter) {
  std::vector<double> p{1.0, 1.0, 1.0}, g{0.0, 0.0, std::numeric_limits<double>::quiet_NaN()};
  Moments<double> m(3);
  std::vector<model::ParamTensor> layout{{"fc1.weight", 0, {2}, true}, {"fc1.bias", 2, {1}, false}};
  try {
    train::adamw_step<double>(p, g, m, 1, TrainConfig{}, layout);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("fc1.bias"), std::string::npos);
  }
  EXPECT_EQ(p, (std::vector<double>{1.0, 1.0, 1.0}));
  EXPECT_THROW(train::adamw_step<double>(p, g, m, 0, TrainConfig{}), InvalidArgumentError);
}

TEST(Metrics, PerfectPredictor) {
  const std::vector<int> y{0, 1, 2, 3, 4, 5, 0, 1};
  const auto m = train::metrics_from_predictions(y, y, 6);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.macro_precision, 1.0);
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      if (i != j) EXPECT_EQ(m.confusion[i][j], 0u);
    }
  }
}

TEST(Metrics, ConstantPredictorOnBalancedSet) {
  std::vector<int> truth, pred;
  for (int k = 0; k < 6; ++k) {
    for (int r = 0; r < 10; ++r) {
      truth.push_back(k);
      pred.push_back(2);
    }
  }
  const auto m = train::metrics_from_predictions(pred, truth, 6);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0 / 6.0);
  EXPECT_NEAR(m.macro_precision, 1.0 / 36.0, 1e-15);
  EXPECT_DOUBLE_EQ(m.class_precision[2], 1.0 / 6.0);
  EXPECT_EQ(m.class_precision[0], 0.0);
}

TEST(Metrics, AccuracyIsTraceOverTotalAndRowsCountTruth) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng() % 200;
    std::vector<int> truth(n), pred(n);
    std::vector<std::size_t> per_class(6, 0);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng() % 6);
      pred[i] = static_cast<int>(rng() % 6);
      ++per_class[truth[i]];
    }
    const auto m = train::metrics_from_predictions(pred, truth, 6);
    std::size_t trace = 0;
    for (std::size_t k = 0; k < 6; ++k) {
      trace += m.confusion[k][k];
      std::size_t row = 0;
      for (auto c : m.confusion[k]) row += c;
      EXPECT_EQ(row, per_class[k]);
    }
    EXPECT_DOUBLE_EQ(m.accuracy, static_cast<double>(trace) / static_cast<double>(n));
  }
}

TEST(Metrics, EmptyTestSetIsConfigError) {
  EXPECT_THROW(train::metrics_from_predictions({}, {}, 6), ConfigError);
}

// Six classes, each a sinusoid at its own frequency on channel 0 and a
// class-dependent offset on channel 1, plus noise.
WindowSet separable_set(std::size_t per_class_per_session, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> noise(0.0f, 0.15f);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  WindowSet set;
  for (int s = 1; s <= 5; ++s) {
    for (std::size_t r = 0; r < per_class_per_session; ++r) {
      for (int k = 0; k < 6; ++k) {
        SampleBlock b(2, 32);
        const double ph = phase(rng);
        for (std::size_t t = 0; t < 32; ++t) {
          b.at(0, t) = static_cast<float>(std::sin(2.0 * std::numbers::pi * (k + 1) * t / 32.0 + ph)) + noise(rng);
          b.at(1, t) = 0.3f * static_cast<float>(k) + noise(rng);
        }
        set.add(b, k, {1, s}, 0.0);
      }
    }
  }
  return set;
}

model::SepCnnConfig small_model() {
  model::SepCnnConfig c;
  c.in_channels = 2;
  c.input_length = 32;
  c.num_blocks = 2;
  c.block_width = 8;
  c.kernel_size = 5;
  c.pool_out = 2;
  c.classifier_hidden = 16;
  c.dropout_p = 0.1;
  return c;
}

Fold last_session_fold() {
  return {{{1, 1}, {1, 2}, {1, 3}, {1, 4}}, {{1, 5}}, 1};
}

TrainConfig quick_train() {
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  cfg.seed = 3;
  return cfg;
}

TEST(TrainFold, SeparableSetReachesHighAccuracy) {
  const auto set = separable_set(10, 1);  // 300 windows
  ASSERT_EQ(set.size(), 300u);
  const auto res = train::train_fold(small_model(), set, last_session_fold(), quick_train());
  EXPECT_GE(res.metrics.accuracy, 0.95);
  EXPECT_EQ(res.metrics.test_count, 60u);
  EXPECT_EQ(res.metrics.param_count, model::count_parameters(small_model()));
  ASSERT_EQ(res.epoch_loss.size(), 50u);
  EXPECT_LT(res.epoch_loss.back(), res.epoch_loss.front());
}

TEST(TrainFold, FullBatchLossNonIncreasingAfterEpochFive) {
  const auto set = separable_set(10, 6);
  auto mcfg = small_model();
  mcfg.dropout_p = 0.0;
  auto cfg = quick_train();
  cfg.batch_size = 240;  // every training window in one batch
  cfg.learning_rate = 1e-3;
  cfg.epochs = 40;
  const auto res = train::train_fold(mcfg, set, last_session_fold(), cfg);
  for (std::size_t e = 5; e < res.epoch_loss.size(); ++e) {
    EXPECT_LE(res.epoch_loss[e], res.epoch_loss[e - 1]) << "epoch " << e;
  }
}

TEST(TrainFold, DeterministicForFixedSeed) {
  const auto set = separable_set(4, 2);
  auto cfg = quick_train();
  cfg.epochs = 5;
  const auto a = train::train_fold(small_model(), set, last_session_fold(), cfg);
  const auto b = train::train_fold(small_model(), set, last_session_fold(), cfg);
  EXPECT_EQ(a.metrics, b.metrics);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_TRUE(std::equal(a.model.params().begin(), a.model.params().end(), b.model.params().begin()));
}

TEST(TrainFold, RejectsLeakAndEmptyPartitions) {
  const auto set = separable_set(2, 3);
  Fold leak = last_session_fold();
  leak.train.push_back({1, 5});
  EXPECT_THROW(train::train_fold(small_model(), set, leak, quick_train()), ConfigError);
  Fold empty = last_session_fold();
  empty.test = {{2, 1}};
  EXPECT_THROW(train::train_fold(small_model(), set, empty, quick_train()), ConfigError);
}

TEST(CrossValidate, JobsDoNotChangeResults) {
  const auto set = separable_set(2, 4);
  SplitPlan plan;
  for (int s = 1; s <= 3; ++s) {
    Fold f;
    for (int t = 1; t <= 5; ++t) (t == s ? f.test : f.train).push_back({1, t});
    plan.folds.push_back(f);
  }
  auto cfg = quick_train();
  cfg.epochs = 3;
  const auto a = train::cross_validate(small_model(), set, plan, cfg, 1);
  const auto b = train::cross_validate(small_model(), set, plan, cfg, 3);
  EXPECT_EQ(a.folds, b.folds);
  EXPECT_NE(train::fold_seed(3, 0), train::fold_seed(3, 1));
}

TEST(Summarize, PopulationStandardDeviation) {
  std::vector<train::FoldMetrics> folds(2);
  folds[0].accuracy = 0.8;
  folds[1].accuracy = 1.0;
  folds[0].macro_precision = 0.5;
  folds[1].macro_precision = 0.5;
  const auto s = train::summarize(folds);
  EXPECT_DOUBLE_EQ(s.mean_accuracy, 0.9);
  EXPECT_NEAR(s.std_accuracy, 0.1, 1e-15);
  EXPECT_EQ(s.std_precision, 0.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.epochs = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

}  // namespace
}  // namespace surfgest
