#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "surfgest/dsp.hpp"
#include "surfgest/error.hpp"
#include "test_util.hpp"

namespace surfgest {
namespace {

using std::numbers::pi;

// Analog prototype after the low-pass -> band-pass map, evaluated at the
// bilinear image of e^{jw}: s = 2 fs (1 - e^{-jw}) / (1 + e^{-jw}).
std::complex<double> analytic_response(const dsp::FilterSpec& spec, double f) {
  const double fs = spec.sample_rate_hz;
  const double wl = 2.0 * fs * std::tan(pi * spec.low_cut_hz / fs);
  const double wh = 2.0 * fs * std::tan(pi * spec.high_cut_hz / fs);
  const std::complex<double> zi = std::exp(std::complex<double>(0.0, -2.0 * pi * f / fs));
  const std::complex<double> s = 2.0 * fs * (1.0 - zi) / (1.0 + zi);
  const double bw = wh - wl;
  return bw * s / (s * s + bw * s + wl * wh);
}

const dsp::FilterSpec kBands[] = {{225.0, 375.0, 1000.0}, {300.0, 450.0, 1000.0}, {50.0, 150.0, 1000.0}};

TEST(BandpassDesign, MatchesAnalyticResponseOnOneHertzGrid) {
  for (const auto& spec : kBands) {
    const auto cascade = dsp::design_bandpass(spec);
    ASSERT_EQ(cascade.size(), 1u);
    double worst = 0.0;
    // The bilinear image of Nyquist is s = infinity; stop one step short.
    for (int f = 0; f < 500; ++f) {
      const auto h = dsp::cascade_response(cascade, f, spec.sample_rate_hz);
      worst = std::max(worst, std::abs(h - analytic_response(spec, f)));
    }
    EXPECT_LT(worst, 1e-6) << spec.low_cut_hz << "-" << spec.high_cut_hz;
  }
}

TEST(BandpassDesign, ZerosAtDcAndNyquistAreExact) {
  for (const auto& spec : kBands) {
    const auto cascade = dsp::design_bandpass(spec);
    const auto& c = cascade.front();
    EXPECT_EQ(c.b1, 0.0);
    EXPECT_EQ(c.b0 + c.b1 + c.b2, 0.0);  // H(z=1)
    EXPECT_EQ(c.b0 - c.b1 + c.b2, 0.0);  // H(z=-1)
    EXPECT_EQ(std::abs(dsp::cascade_response({c}, 0.0, spec.sample_rate_hz)), 0.0);
    EXPECT_EQ(std::abs(dsp::cascade_response({c}, spec.sample_rate_hz / 2.0, spec.sample_rate_hz)), 0.0);
  }
}

TEST(BandpassDesign, UnityGainAtWarpedCentreAndHalfPowerAtEdges) {
  const dsp::FilterSpec spec{225.0, 375.0, 1000.0};
  const auto cascade = dsp::design_bandpass(spec);
  const double fs = spec.sample_rate_hz;
  const double wl = std::tan(pi * spec.low_cut_hz / fs);
  const double wh = std::tan(pi * spec.high_cut_hz / fs);
  const double f0 = fs / pi * std::atan(std::sqrt(wl * wh));
  EXPECT_NEAR(std::abs(dsp::cascade_response(cascade, f0, fs)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(dsp::cascade_response(cascade, spec.low_cut_hz, fs)), std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(std::abs(dsp::cascade_response(cascade, spec.high_cut_hz, fs)), std::sqrt(0.5), 1e-12);
}

TEST(BandpassDesign, PolesInsideUnitCircle) {
  for (const auto& spec : kBands) EXPECT_LT(dsp::max_pole_radius(dsp::design_bandpass(spec)), 1.0);
  // Narrow band near DC pushes the poles close to the circle.
  EXPECT_LT(dsp::max_pole_radius(dsp::design_bandpass({1.0, 2.0, 1000.0})), 1.0);
}

TEST(BandpassDesign, RejectsInvalidBands) {
  EXPECT_THROW(dsp::design_bandpass({0.0, 100.0, 1000.0}), InvalidSpecError);
  EXPECT_THROW(dsp::design_bandpass({100.0, 500.0, 1000.0}), InvalidSpecError);
  EXPECT_THROW(dsp::design_bandpass({300.0, 300.0, 1000.0}), InvalidSpecError);
  EXPECT_THROW(dsp::design_bandpass({300.0, 200.0, 1000.0}), InvalidSpecError);
  EXPECT_THROW(dsp::design_bandpass({100.0, 200.0, 0.0}), InvalidSpecError);
}

TEST(StreamFilter, ImpulseResponseSpectrumMatchesDesign) {
  const dsp::FilterSpec spec{225.0, 375.0, 1000.0};
  const auto cascade = dsp::design_bandpass(spec);
  dsp::StreamFilter f(cascade, 1);
  const std::size_t n = 4000;
  std::vector<double> h(n);
  for (std::size_t i = 0; i < n; ++i) h[i] = f.step(0, i == 0 ? 1.0 : 0.0);
  for (double freq : {50.0, 225.0, 290.0, 300.0, 375.0, 450.0}) {
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) acc += h[i] * std::polar(1.0, -2.0 * pi * freq * i / 1000.0);
    EXPECT_LT(std::abs(acc - dsp::cascade_response(cascade, freq, 1000.0)), 1e-9) << freq;
  }
}

TEST(StreamFilter, ChunkedEqualsBatch) {
  const auto cascade = dsp::design_bandpass({225.0, 375.0, 1000.0});
  const auto block = testing::random_block(4, 5000, 11);
  const auto whole = dsp::filter_block(cascade, block);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    dsp::StreamFilter f(cascade, 4);
    std::size_t start = 0;
    SampleBlock joined(4, block.length);
    while (start < block.length) {
      const std::size_t len = std::min<std::size_t>(1 + rng() % 700, block.length - start);
      const auto out = f.process(block.slice(start, len));
      for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t t = 0; t < len; ++t) joined.at(c, start + t) = out.at(c, t);
      }
      start += len;
    }
    for (std::size_t i = 0; i < whole.data.size(); ++i) {
      ASSERT_LE(std::abs(joined.data[i] - whole.data[i]), 1e-9 * std::max(1.0f, std::abs(whole.data[i])));
    }
  }
}

TEST(StreamFilter, ChannelMismatchThrows) {
  dsp::StreamFilter f(dsp::design_bandpass({225.0, 375.0, 1000.0}), 4);
  EXPECT_THROW(f.process(SampleBlock(3, 10)), ShapeError);
}

TEST(StreamFilter, ResetRestartsFromZeroState) {
  const auto cascade = dsp::design_bandpass({225.0, 375.0, 1000.0});
  const auto block = testing::random_block(2, 300, 3);
  dsp::StreamFilter f(cascade, 2);
  const auto first = f.process(block);
  f.reset();
  EXPECT_EQ(f.process(block), first);
}

TEST(ChunkedStream, SplitAndConcatenateRoundTrip) {
  const auto block = testing::random_block(3, 1001, 9);
  const auto stream = dsp::split_into_chunks(block, 1000.0, 128);
  EXPECT_EQ(stream.chunks.size(), 8u);
  EXPECT_EQ(stream.chunks.back().length, 1001u - 7 * 128);
  EXPECT_EQ(stream.concatenate(), block);
  EXPECT_THROW(dsp::split_into_chunks(block, 1000.0, 0), InvalidArgumentError);
}

TEST(MinMaxNormalize, JointExtremaMapToUnitRange) {
  const auto w = block_from_rows({{-2.0f, 0.0f, 1.0f}, {2.0f, -1.0f, 0.5f}});
  const auto out = dsp::minmax_normalize(w);
  EXPECT_FLOAT_EQ(out.at(0, 0), 0.0f);
  EXPECT_FLOAT_EQ(out.at(1, 0), 1.0f);
  EXPECT_FLOAT_EQ(out.at(0, 1), 0.5f);
  EXPECT_FLOAT_EQ(out.at(1, 2), 0.625f);
}

TEST(MinMaxNormalize, ConstantWindowIsZero) {
  SampleBlock w(2, 5);
  std::fill(w.data.begin(), w.data.end(), 3.5f);
  const auto out = dsp::minmax_normalize(w);
  for (float v : out.data) EXPECT_EQ(v, 0.0f);
}

TEST(MinMaxNormalize, AffineInvariant) {
  const auto w = testing::random_block(4, 200, 1);
  auto scaled = w;
  for (auto& v : scaled.data) v = 3.0f * v + 7.0f;
  const auto a = dsp::minmax_normalize(w);
  const auto b = dsp::minmax_normalize(scaled);
  for (std::size_t i = 0; i < a.data.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], 1e-5);
}

TEST(Downsample, KeepsEveryFactorthSample) {
  SampleBlock b(2, 11);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t t = 0; t < 11; ++t) b.at(c, t) = static_cast<float>(100 * c + t);
  }
  const auto out = dsp::downsample(b, 5);
  ASSERT_EQ(out.length, 3u);
  EXPECT_EQ(out.at(0, 2), 10.0f);
  EXPECT_EQ(out.at(1, 1), 105.0f);
  EXPECT_EQ(dsp::downsampled_length(1250, 10), 125u);
  EXPECT_EQ(dsp::downsampled_length(1000, 1), 1000u);
  EXPECT_EQ(dsp::downsample(b, 1), b);
  EXPECT_THROW(dsp::downsample(b, 0), InvalidArgumentError);
}

TEST(Downsample, AntiAliasAttenuatesAboveNewNyquist) {
  const std::size_t n = 4000;
  SampleBlock tone(1, n);
  for (std::size_t t = 0; t < n; ++t) tone.at(0, t) = static_cast<float>(std::sin(2.0 * pi * 410.0 * t / 1000.0));
  const auto plain = dsp::downsample(tone, 5, false);
  const auto smooth = dsp::downsample(tone, 5, true);
  auto rms = [](const SampleBlock& b) {
    double s = 0.0;
    for (std::size_t t = b.length / 2; t < b.length; ++t) s += b.at(0, t) * b.at(0, t);
    return std::sqrt(s / static_cast<double>(b.length - b.length / 2));
  };
  EXPECT_LT(rms(smooth), 0.1 * rms(plain));
}

TEST(Lowpass, UnityAtDcAndHalfPowerAtCutoff) {
  const auto c = dsp::design_lowpass(0.1);
  EXPECT_NEAR(std::abs(c.response(0.0, 1.0)), 1.0, 1e-12);
  EXPECT_NEAR(std::abs(c.response(0.1, 1.0)), std::sqrt(0.5), 1e-12);
  EXPECT_THROW(dsp::design_lowpass(0.5), InvalidSpecError);
}

}  // namespace
}  // namespace surfgest
