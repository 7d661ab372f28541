#include "surfgest/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "surfgest/error.hpp"

namespace surfgest::dsp {

void FilterSpec::validate() const {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw InvalidSpecError("sample rate must be positive, got " + std::to_string(sample_rate_hz));
  }
  const double nyquist = sample_rate_hz / 2.0;
  if (!(low_cut_hz > 0.0) || !(low_cut_hz < nyquist)) {
    throw InvalidSpecError("low cut-off " + std::to_string(low_cut_hz) + " Hz outside (0, " +
                           std::to_string(nyquist) + ")");
  }
  if (!(high_cut_hz > 0.0) || !(high_cut_hz < nyquist)) {
    throw InvalidSpecError("high cut-off " + std::to_string(high_cut_hz) + " Hz outside (0, " +
                           std::to_string(nyquist) + ")");
  }
  if (!(high_cut_hz > low_cut_hz)) {
    throw InvalidSpecError("degenerate band: high cut-off must exceed low cut-off");
  }
}

std::complex<double> BiquadCoeffs::response(double freq_hz, double sample_rate_hz) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
  // z^-1, exact on the real axis at DC and Nyquist
  const std::complex<double> zi = 2.0 * freq_hz == sample_rate_hz ? std::complex<double>(-1.0, 0.0)
                                  : freq_hz == 0.0               ? std::complex<double>(1.0, 0.0)
                                                                 : std::polar(1.0, -w);
  const std::complex<double> zi2 = zi * zi;
  return (b0 + b1 * zi + b2 * zi2) / (1.0 + a1 * zi + a2 * zi2);
}

std::array<std::complex<double>, 2> BiquadCoeffs::poles() const {
  // Roots of z^2 + a1 z + a2.
  const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2, 0.0));
  return {(-a1 + disc) / 2.0, (-a1 - disc) / 2.0};
}

Cascade design_bandpass(const FilterSpec& spec) {
  spec.validate();
  const double fs = spec.sample_rate_hz;
  const double k = 2.0 * fs;
  const double w_lo = k * std::tan(std::numbers::pi * spec.low_cut_hz / fs);
  const double w_hi = k * std::tan(std::numbers::pi * spec.high_cut_hz / fs);
  const double bw = w_hi - w_lo;
  const double w0_sq = w_lo * w_hi;

  // H(s) = bw s / (s^2 + bw s + w0^2), s = k (1 - z^-1) / (1 + z^-1).
  const double a0 = k * k + bw * k + w0_sq;
  BiquadCoeffs c;
  c.b0 = bw * k / a0;
  c.b1 = 0.0;
  c.b2 = -bw * k / a0;
  c.a1 = (2.0 * w0_sq - 2.0 * k * k) / a0;
  c.a2 = (k * k - bw * k + w0_sq) / a0;
  return {c};
}

BiquadCoeffs design_lowpass(double normalized_cutoff) {
  if (!(normalized_cutoff > 0.0) || !(normalized_cutoff < 0.5)) {
    throw InvalidSpecError("low-pass cutoff must be in (0, 0.5) of the sample rate");
  }
  const double k = 2.0;  // fs normalized to 1
  const double wc = k * std::tan(std::numbers::pi * normalized_cutoff);
  const double wc_sq = wc * wc;
  const double a0 = k * k + std::numbers::sqrt2 * wc * k + wc_sq;
  BiquadCoeffs c;
  c.b0 = wc_sq / a0;
  c.b1 = 2.0 * wc_sq / a0;
  c.b2 = wc_sq / a0;
  c.a1 = (2.0 * wc_sq - 2.0 * k * k) / a0;
  c.a2 = (k * k - std::numbers::sqrt2 * wc * k + wc_sq) / a0;
  return c;
}

std::complex<double> cascade_response(const Cascade& cascade, double freq_hz,
                                      double sample_rate_hz) {
  std::complex<double> h{1.0, 0.0};
  for (const auto& s : cascade) h *= s.response(freq_hz, sample_rate_hz);
  return h;
}

double max_pole_radius(const Cascade& cascade) {
  double r = 0.0;
  for (const auto& s : cascade) {
    for (const auto& p : s.poles()) r = std::max(r, std::abs(p));
  }
  return r;
}

StreamFilter::StreamFilter(Cascade cascade, std::size_t channels)
    : cascade_(std::move(cascade)), channels_(channels),
      state_(channels * cascade_.size(), {0.0, 0.0}) {
  if (channels == 0) throw ShapeError("stream filter needs at least one channel");
}

void StreamFilter::reset() { std::fill(state_.begin(), state_.end(), std::array<double, 2>{0.0, 0.0}); }

double StreamFilter::step(std::size_t channel, double x) {
  const std::size_t n = cascade_.size();
  for (std::size_t s = 0; s < n; ++s) {
    const auto& c = cascade_[s];
    auto& z = state_[channel * n + s];
    const double y = c.b0 * x + z[0];
    z[0] = c.b1 * x - c.a1 * y + z[1];
    z[1] = c.b2 * x - c.a2 * y;
    x = y;
  }
  return x;
}

void StreamFilter::process_inplace(SampleBlock& chunk) {
  if (chunk.channels != channels_) {
    throw ShapeError("filter_stream: chunk has " + std::to_string(chunk.channels) +
                     " channels, filter state has " + std::to_string(channels_));
  }
  for (std::size_t c = 0; c < channels_; ++c) {
    for (float& v : chunk.channel(c)) v = static_cast<float>(step(c, v));
  }
}

SampleBlock StreamFilter::process(const SampleBlock& chunk) {
  SampleBlock out = chunk;
  process_inplace(out);
  return out;
}

SampleBlock filter_block(const Cascade& cascade, const SampleBlock& block) {
  StreamFilter f(cascade, block.channels);
  return f.process(block);
}

std::size_t ChunkedStream::total_length() const {
  std::size_t n = 0;
  for (const auto& c : chunks) n += c.length;
  return n;
}

SampleBlock ChunkedStream::concatenate() const {
  SampleBlock out(channels, total_length());
  std::size_t offset = 0;
  for (const auto& chunk : chunks) {
    if (chunk.channels != channels) throw ShapeError("chunk channel count differs from stream");
    for (std::size_t c = 0; c < channels; ++c) {
      auto src = chunk.channel(c);
      std::copy(src.begin(), src.end(), out.channel(c).begin() + static_cast<std::ptrdiff_t>(offset));
    }
    offset += chunk.length;
  }
  return out;
}

ChunkedStream split_into_chunks(const SampleBlock& block, double sample_rate_hz,
                                std::size_t chunk_len) {
  if (chunk_len == 0) throw InvalidArgumentError("chunk length must be positive");
  ChunkedStream s{block.channels, sample_rate_hz, {}};
  for (std::size_t start = 0; start < block.length; start += chunk_len) {
    s.chunks.push_back(block.slice(start, std::min(chunk_len, block.length - start)));
  }
  return s;
}

SampleBlock minmax_normalize(const SampleBlock& window) {
  if (window.empty()) throw ShapeError("minmax_normalize: empty window");
  const auto [lo_it, hi_it] = std::minmax_element(window.data.begin(), window.data.end());
  const float lo = *lo_it;
  const float hi = *hi_it;
  SampleBlock out(window.channels, window.length);
  if (!(hi > lo)) return out;
  const double range = static_cast<double>(hi) - static_cast<double>(lo);
  for (std::size_t i = 0; i < window.data.size(); ++i) {
    out.data[i] = static_cast<float>((static_cast<double>(window.data[i]) - lo) / range);
  }
  return out;
}

SampleBlock downsample(const SampleBlock& block, int factor, bool anti_alias) {
  if (factor < 1) throw InvalidArgumentError("downsample factor must be >= 1, got " + std::to_string(factor));
  if (factor == 1) return block;
  const SampleBlock* src = &block;
  SampleBlock smoothed;
  if (anti_alias) {
    smoothed = filter_block({design_lowpass(0.8 * 0.5 / factor)}, block);
    src = &smoothed;
  }
  const std::size_t n = downsampled_length(block.length, factor);
  SampleBlock out(block.channels, n);
  for (std::size_t c = 0; c < block.channels; ++c) {
    auto in = src->channel(c);
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < n; ++i) dst[i] = in[i * static_cast<std::size_t>(factor)];
  }
  return out;
}

}  // namespace surfgest::dsp
