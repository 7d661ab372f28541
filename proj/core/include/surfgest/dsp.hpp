#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <vector>

#include "surfgest/types.hpp"

namespace surfgest::dsp {

// Band-pass design request. The realized filter is always second order.
struct FilterSpec {
  double low_cut_hz = 225.0;
  double high_cut_hz = 375.0;
  double sample_rate_hz = 1000.0;

  // Throws InvalidSpecError unless 0 < low < high < fs/2.
  void validate() const;

  bool operator==(const FilterSpec&) const = default;
};

// Normalized biquad coefficients for Direct Form II Transposed:
//
//   y[n] = b0*x[n] + b1*x[n-1] + b2*x[n-2] - a1*y[n-1] - a2*y[n-2]
//
// with a0 already divided out.
struct BiquadCoeffs {
  double b0 = 1.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double a1 = 0.0;
  double a2 = 0.0;

  // H(e^{j 2 pi f / fs}).
  std::complex<double> response(double freq_hz, double sample_rate_hz) const;
  std::array<std::complex<double>, 2> poles() const;
};

using Cascade = std::vector<BiquadCoeffs>;

// First-order Butterworth low-pass prototype, low-pass to band-pass
// transformation, then bilinear transform with both edges pre-warped.
// One biquad; zeros at DC and Nyquist, unity gain at the warped centre.
Cascade design_bandpass(const FilterSpec& spec);

// Second-order Butterworth low-pass, cutoff given as a fraction of the
// sample rate (0 < cutoff < 0.5). Used by the optional anti-alias stage.
BiquadCoeffs design_lowpass(double normalized_cutoff);

std::complex<double> cascade_response(const Cascade& cascade, double freq_hz,
                                      double sample_rate_hz);

// Largest pole modulus over all sections.
double max_pole_radius(const Cascade& cascade);

// Stateful per-channel filter. State persists across process() calls, so
// feeding a recording chunk by chunk equals filtering it in one call.
class StreamFilter {
 public:
  StreamFilter(Cascade cascade, std::size_t channels);

  // Throws ShapeError if the chunk's channel count differs.
  SampleBlock process(const SampleBlock& chunk);
  void process_inplace(SampleBlock& chunk);

  // Single sample in double precision, advancing that channel's state.
  double step(std::size_t channel, double x);

  void reset();
  std::size_t channels() const noexcept { return channels_; }
  const Cascade& cascade() const noexcept { return cascade_; }

 private:
  Cascade cascade_;
  std::size_t channels_;
  // Two delay registers per (channel, section).
  std::vector<std::array<double, 2>> state_;
};

// One-shot filtering from zero state.
SampleBlock filter_block(const Cascade& cascade, const SampleBlock& block);

// Ordered chunks of one multi-channel stream.
struct ChunkedStream {
  std::size_t channels = 0;
  double sample_rate_hz = 1000.0;
  std::vector<SampleBlock> chunks;

  std::size_t total_length() const;
  SampleBlock concatenate() const;
};

ChunkedStream split_into_chunks(const SampleBlock& block, double sample_rate_hz,
                                std::size_t chunk_len);

// (x - min) / (max - min) with min and max taken jointly over every channel
// and sample. A constant window maps to all zeros.
SampleBlock minmax_normalize(const SampleBlock& window);

// Keeps samples 0, f, 2f, ...; output length floor((N-1)/f) + 1.
// With anti_alias set, a Butterworth low-pass at 0.8 of the new Nyquist runs
// first (zero initial state).
SampleBlock downsample(const SampleBlock& block, int factor, bool anti_alias = false);

inline std::size_t downsampled_length(std::size_t n, int factor) {
  return n == 0 ? 0 : (n - 1) / static_cast<std::size_t>(factor) + 1;
}

}  // namespace surfgest::dsp
