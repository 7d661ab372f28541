#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "surfgest/dataset.hpp"
#include "surfgest/error.hpp"
#include "test_util.hpp"

namespace surfgest {
namespace {

std::vector<SessionKey> grid(int participants, int sessions) {
  std::vector<SessionKey> keys;
  for (int p = 1; p <= participants; ++p) {
    for (int s = 1; s <= sessions; ++s) keys.push_back({p, s});
  }
  return keys;
}

Recording ramp_recording(std::size_t length) {
  Recording rec{2, 3, 1000.0, SampleBlock(2, length)};
  for (std::size_t t = 0; t < length; ++t) {
    rec.samples.at(0, t) = static_cast<float>(t);
    rec.samples.at(1, t) = -static_cast<float>(t);
  }
  return rec;
}

TEST(WindowSamples, WholeSampleCounts) {
  EXPECT_EQ(window_samples(1250.0, 1000.0), 1250u);
  EXPECT_EQ(window_samples(1000.0, 500.0), 500u);
  EXPECT_THROW(window_samples(1.5, 1000.0), ConfigError);
  EXPECT_THROW(window_samples(0.0, 1000.0), ConfigError);
}

TEST(SequenceWindows, StartsBeforeOnsetByPreOnsetFraction) {
  const auto rec = ramp_recording(10000);
  EventAnnotation ann;
  ann.events = {{2.0, GestureClass::kTap, AnnotationSource::kGroundTruth}};
  const auto res = sequence_windows(rec, ann, 1000.0, 0.1);
  ASSERT_EQ(res.windows.size(), 1u);
  const auto& w = res.windows[0];
  EXPECT_EQ(w.samples.length, 1000u);
  EXPECT_EQ(w.samples.at(0, 0), 1900.0f);
  EXPECT_EQ(w.samples.at(1, 999), -2899.0f);
  EXPECT_EQ(w.label, GestureClass::kTap);
  EXPECT_EQ(w.key(), (SessionKey{2, 3}));
}

TEST(SequenceWindows, DropsBoundaryAndUnlabelledEvents) {
  const auto rec = ramp_recording(5000);
  EventAnnotation ann;
  ann.events = {{0.05, GestureClass::kTap, AnnotationSource::kAutomatic},
                {2.0, std::nullopt, AnnotationSource::kAutomatic},
                {2.5, GestureClass::kKnock, AnnotationSource::kAutomatic},
                {4.5, GestureClass::kTap, AnnotationSource::kAutomatic}};
  const auto res = sequence_windows(rec, ann, 1000.0, 0.1);
  ASSERT_EQ(res.windows.size(), 1u);
  EXPECT_EQ(res.windows[0].onset_sec, 2.5);
  EXPECT_EQ(res.warnings.size(), 3u);
}

TEST(SequenceWindows, SixtyEventsSixtyWindowsAndDeterministic) {
  const auto rec = ramp_recording(130000);
  EventAnnotation ann;
  for (int i = 0; i < 60; ++i) {
    ann.events.push_back({1.0 + 2.0 * i, kAllGestures[i % 6], AnnotationSource::kGroundTruth});
  }
  const auto a = sequence_windows(rec, ann, 1250.0, 0.1);
  EXPECT_EQ(a.windows.size(), 60u);
  EXPECT_TRUE(a.warnings.empty());
  const auto b = sequence_windows(rec, ann, 1250.0, 0.1);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_EQ(a.windows[i].samples, b.windows[i].samples);
}

TEST(SequenceWindows, SampleRateMismatchThrows) {
  const auto rec = ramp_recording(5000);
  EventAnnotation ann;
  ann.sample_rate_hz = 500.0;
  EXPECT_THROW(sequence_windows(rec, ann, 1000.0, 0.1), ConfigError);
}

TEST(WindowSet, SelectSubsetRestrictAndStore) {
  testing::TempDir dir;
  WindowSet set;
  for (int i = 0; i < 12; ++i) {
    set.add(testing::random_block(2, 8, i), i % 6, {1 + i % 2, 1 + i / 6}, 0.5 * i);
  }
  EXPECT_THROW(set.add(SampleBlock(3, 8), 0, {1, 1}, 0.0), ShapeError);
  const std::vector<SessionKey> wanted{{1, 1}};
  const auto idx = set.select(wanted);
  EXPECT_EQ(idx, (std::vector<std::size_t>{0, 2, 4}));
  const auto sub = set.subset(idx);
  EXPECT_EQ(sub.size(), 3u);
  EXPECT_TRUE(std::equal(sub.sample(1).begin(), sub.sample(1).end(), set.sample(2).begin()));
  const auto swipes = set.restrict_classes(kNumSwipeClasses);
  EXPECT_EQ(swipes.size(), 8u);
  for (int l : swipes.labels) EXPECT_LT(l, 4);

  store_windows(dir / "w.bin", set);
  EXPECT_EQ(load_windows(dir / "w.bin"), set);
}

TEST(DatasetIndex, JsonRoundTripResolvesRelativePaths) {
  testing::TempDir dir;
  DatasetIndex idx;
  idx.entries.push_back({"P01_S01", {1, 1}, "recordings/P01_S01.vibr", "truth/P01_S01.json", std::nullopt});
  idx.entries.push_back({"P01_S02", {1, 2}, "recordings/P01_S02.vibr", std::nullopt, "ann/P01_S02.json"});
  save_index(dir / "index.json", idx);
  const auto back = load_index(dir / "index.json");
  ASSERT_EQ(back.entries.size(), 2u);
  EXPECT_EQ(back.root, dir.path());
  EXPECT_EQ(back.resolve(back.entries[0].recording), dir / "recordings/P01_S01.vibr");
  EXPECT_EQ(back.entries[1].annotation, std::filesystem::path("ann/P01_S02.json"));
  EXPECT_FALSE(back.entries[1].truth.has_value());
  ASSERT_NE(back.find({1, 2}), nullptr);
  EXPECT_EQ(back.find({3, 3}), nullptr);
}

TEST(Splits, PerSubjectFifteenByTen) {
  const auto keys = grid(15, 10);
  const auto plan = make_splits(keys, SplitMethod::kPerSubject);
  ASSERT_EQ(plan.folds.size(), 75u);
  std::map<SessionKey, int> tested;
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.test.size(), 2u);
    EXPECT_EQ(f.train.size(), 8u);
    for (const auto& k : f.test) {
      EXPECT_EQ(k.participant, f.participant);
      ++tested[k];
    }
    for (const auto& k : f.train) EXPECT_EQ(k.participant, f.participant);
  }
  EXPECT_EQ(tested.size(), 150u);
  for (const auto& [k, n] : tested) EXPECT_EQ(n, 1);
}

TEST(Splits, LosoPurity) {
  const auto plan = make_splits(grid(15, 10), SplitMethod::kLoso);
  ASSERT_EQ(plan.folds.size(), 15u);
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.test.size(), 10u);
    EXPECT_EQ(f.train.size(), 140u);
    for (const auto& k : f.train) EXPECT_NE(k.participant, f.participant);
    for (const auto& k : f.test) EXPECT_EQ(k.participant, f.participant);
  }
}

TEST(Splits, AosCalibrationSession) {
  const auto plan = make_splits(grid(15, 10), SplitMethod::kAos);
  ASSERT_EQ(plan.folds.size(), 15u);
  const auto& f3 = plan.folds[2];
  EXPECT_EQ(f3.participant, 3);
  EXPECT_NE(std::find(f3.train.begin(), f3.train.end(), SessionKey{3, 1}), f3.train.end());
  EXPECT_EQ(f3.train.size(), 141u);
  EXPECT_EQ(f3.test.size(), 9u);
  for (int s = 2; s <= 10; ++s) EXPECT_NE(std::find(f3.test.begin(), f3.test.end(), SessionKey{3, s}), f3.test.end());
  for (const auto& f : plan.folds) {
    const auto own = std::count_if(f.train.begin(), f.train.end(),
                                   [&](const SessionKey& k) { return k.participant == f.participant; });
    EXPECT_EQ(own, 1);
  }
}

TEST(Splits, PooledSessionsFiveFolds) {
  const auto plan = make_splits(grid(15, 10), SplitMethod::kPooledSessions);
  ASSERT_EQ(plan.folds.size(), 5u);
  for (const auto& f : plan.folds) {
    EXPECT_EQ(f.test.size(), 30u);
    EXPECT_EQ(f.train.size(), 120u);
  }
}

TEST(Splits, RejectsBadShapes) {
  EXPECT_THROW(make_splits(grid(2, 3), SplitMethod::kPerSubject), ConfigError);
  EXPECT_THROW(make_splits(grid(1, 4), SplitMethod::kLoso), ConfigError);
  EXPECT_THROW(make_splits(grid(3, 1), SplitMethod::kAos), ConfigError);
  auto dup = grid(2, 2);
  dup.push_back({1, 1});
  EXPECT_THROW(make_splits(dup, SplitMethod::kLoso), ConfigError);
  EXPECT_THROW(make_splits({}, SplitMethod::kLoso), ConfigError);
  EXPECT_EQ(make_splits(grid(2, 6), SplitMethod::kPerSubject, {3, 0}).folds.size(), 6u);
}

TEST(Splits, NamesAndJson) {
  EXPECT_EQ(parse_split("LOSO"), SplitMethod::kLoso);
  EXPECT_FALSE(parse_split("kfold").has_value());
  const auto j = split_plan_json(make_splits(grid(2, 2), SplitMethod::kLoso));
  EXPECT_NE(j.find("\"LOSO\""), std::string::npos);
}

}  // namespace
}  // namespace surfgest
