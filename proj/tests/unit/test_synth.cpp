#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <numbers>

#include "surfgest/detect.hpp"
#include "surfgest/error.hpp"
#include "surfgest/synth.hpp"
#include "test_util.hpp"

namespace surfgest {
namespace {

using synth::SynthConfig;

// Sum of |X_k|^2 over the DFT bins inside [lo, hi], scaled so that a white
// signal of variance s^2 yields s^2 * 2 (hi - lo) / fs per sample.
double inband_energy(std::span<const float> x, double fs, double lo, double hi) {
  const std::size_t n = x.size();
  double e = 0.0;
  for (std::size_t k = 1; 2 * k < n; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    if (f < lo || f > hi) continue;
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t t = 0; t < n; ++t) {
      acc += static_cast<double>(x[t]) * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t) / n);
    }
    e += 2.0 * std::norm(acc) / static_cast<double>(n);
  }
  return e;
}

TEST(SynthConfig, Validation) {
  SynthConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.channels = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.burst_high_hz = 600.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.snr_db = std::nan("");
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.snr_db = -std::numeric_limits<double>::infinity();
  EXPECT_NO_THROW(cfg.validate());
  cfg = {};
  cfg.tap_min_ms = 200.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Synth, SessionHasSixtyBalancedIncreasingEvents) {
  SynthConfig cfg;
  cfg.seed = 3;
  const auto parts = synth::generate_session_parts(cfg, 1, 1);
  const auto& truth = parts.truth;
  ASSERT_EQ(truth.events.size(), 60u);
  EXPECT_TRUE(truth.strictly_increasing());
  std::map<GestureClass, int> counts;
  for (const auto& e : truth.events) {
    ASSERT_TRUE(e.label.has_value());
    EXPECT_EQ(e.source, AnnotationSource::kGroundTruth);
    ++counts[*e.label];
  }
  for (auto g : kAllGestures) EXPECT_EQ(counts[g], 10);
  // Onsets keep at least the default detector lockout apart.
  EXPECT_GE(truth.min_gap_sec(), detect::DetectorConfig{}.lockout_ms / 1000.0);
  EXPECT_EQ(truth.recording_id, "P01_S01");
  EXPECT_EQ(parts.recording.samples.channels, 4u);
}

TEST(Synth, EventsDoNotOverlap) {
  const auto parts = synth::generate_session_parts({}, 2, 1);
  for (std::size_t i = 1; i < parts.onset_samples.size(); ++i) {
    EXPECT_GE(parts.onset_samples[i], parts.onset_samples[i - 1] + parts.event_lengths[i - 1]);
  }
  EXPECT_LE(parts.onset_samples.back() + parts.event_lengths.back(), parts.recording.samples.length);
}

TEST(Synth, SwipeLeftMirrorsSwipeRightOnXPair) {
  SynthConfig cfg;
  const auto style = synth::participant_style(cfg, 1);
  std::mt19937_64 rng(17);
  const auto draws = synth::draw_event(cfg, style, rng);
  const auto right = synth::render_event(cfg, style, draws, GestureClass::kSwipeRight).samples;
  const auto left = synth::render_event(cfg, style, draws, GestureClass::kSwipeLeft).samples;
  ASSERT_EQ(left.length, right.length);
  for (std::size_t t = 0; t < left.length; ++t) {
    EXPECT_EQ(left.at(synth::kXMinus, t), right.at(synth::kXPlus, t));
    EXPECT_EQ(left.at(synth::kXPlus, t), right.at(synth::kXMinus, t));
    EXPECT_EQ(left.at(synth::kYMinus, t), right.at(synth::kYMinus, t));
    EXPECT_EQ(left.at(synth::kYPlus, t), right.at(synth::kYPlus, t));
  }
}

TEST(Synth, SwipeDirectionSetsLeadingChannel) {
  SynthConfig cfg;
  const auto style = synth::participant_style(cfg, 1);
  std::mt19937_64 rng(18);
  const auto draws = synth::draw_event(cfg, style, rng);
  auto first_nonzero = [](std::span<const float> ch) {
    for (std::size_t t = 0; t < ch.size(); ++t) {
      if (ch[t] != 0.0f) return t;
    }
    return ch.size();
  };
  const auto up = synth::render_event(cfg, style, draws, GestureClass::kSwipeUp).samples;
  EXPECT_LT(first_nonzero(up.channel(synth::kYMinus)), first_nonzero(up.channel(synth::kYPlus)));
  const auto down = synth::render_event(cfg, style, draws, GestureClass::kSwipeDown).samples;
  EXPECT_LT(first_nonzero(down.channel(synth::kYPlus)), first_nonzero(down.channel(synth::kYMinus)));
}

TEST(Synth, PerEventSnrWithinOneDb) {
  SynthConfig cfg;
  cfg.seed = 5;
  cfg.snr_db = 10.0;
  const auto parts = synth::generate_session_parts(cfg, 1, 1);
  const double fs = cfg.sample_rate_hz;
  // Noise: Welch average over 1 s segments of the stored noise.
  double noise = 0.0;
  std::size_t segments = 0;
  for (std::size_t c = 0; c < 4; ++c) {
    const auto ch = parts.noise.channel(c);
    for (std::size_t s = 0; s + 1000 <= 20000; s += 1000, ++segments) {
      noise += inband_energy(ch.subspan(s, 1000), fs, cfg.burst_low_hz, cfg.burst_high_hz) / 1000.0;
    }
  }
  noise /= static_cast<double>(segments);
  for (std::size_t i = 0; i < parts.onset_samples.size(); ++i) {
    double signal = 0.0;
    for (std::size_t c = 0; c < 4; ++c) {
      const auto seg = parts.clean.channel(c).subspan(parts.onset_samples[i], parts.event_lengths[i]);
      signal += inband_energy(seg, fs, cfg.burst_low_hz, cfg.burst_high_hz);
    }
    signal /= 4.0 * static_cast<double>(parts.active_samples[i]);
    EXPECT_NEAR(10.0 * std::log10(signal / noise), cfg.snr_db, 1.0) << "event " << i;
  }
}

TEST(Synth, NoSignalAtMinusInfinitySnr) {
  SynthConfig cfg;
  cfg.snr_db = -std::numeric_limits<double>::infinity();
  const auto parts = synth::generate_session_parts(cfg, 1, 1);
  for (float v : parts.clean.data) ASSERT_EQ(v, 0.0f);
  EXPECT_TRUE(detect::detect_events(parts.recording.samples, cfg.sample_rate_hz, {}).events.empty());
}

TEST(Synth, DeterministicPerSeedAndVariesAcrossSessions) {
  SynthConfig cfg;
  cfg.seed = 9;
  const auto a = synth::generate_session(cfg, 2, 1);
  const auto b = synth::generate_session(cfg, 2, 1);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  const auto c = synth::generate_session(cfg, 2, 2);
  EXPECT_NE(a.second.timestamps(), c.second.timestamps());
}

TEST(Synth, DeskCorpusByteIdenticalAndFast) {
  testing::TempDir d1, d2;
  SynthConfig cfg;
  cfg.seed = 7;
  const auto start = std::chrono::steady_clock::now();
  const auto index = synth::generate_corpus(cfg, 2, 2, d1.path());
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(elapsed, 10.0);
  ASSERT_EQ(index.entries.size(), 4u);
  std::size_t events = 0;
  for (const auto& e : index.entries) events += load_annotation(index.resolve(*e.truth)).events.size();
  EXPECT_EQ(events, 240u);

  synth::generate_corpus(cfg, 2, 2, d2.path());
  auto bytes = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  for (const auto& e : index.entries) {
    EXPECT_EQ(bytes(d1 / e.recording.string()), bytes(d2 / e.recording.string()));
    EXPECT_EQ(bytes(d1 / e.truth->string()), bytes(d2 / e.truth->string()));
  }
  EXPECT_EQ(bytes(d1 / "index.json"), bytes(d2 / "index.json"));
}

TEST(Synth, RecordingIds) {
  EXPECT_EQ(synth::recording_id(3, 10), "P03_S10");
  EXPECT_THROW(synth::generate_corpus({}, 0, 1, "unused"), ConfigError);
}

}  // namespace
}  // namespace surfgest
