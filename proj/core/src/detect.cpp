#include "surfgest/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "surfgest/error.hpp"

namespace surfgest::detect {

void DetectorConfig::validate() const {
  if (!(high_gain > low_gain) || !(low_gain > 0.0)) {
    throw ConfigError("detector gains must satisfy high_gain > low_gain > 0");
  }
  if (!(occupancy_frac > 0.0) || occupancy_frac > 1.0) {
    throw ConfigError("detector occupancy_frac must be in (0, 1]");
  }
  if (!(det_window_ms > 0.0) || !(hop_ms > 0.0) || hop_ms > det_window_ms) {
    throw ConfigError("detector needs 0 < hop_ms <= det_window_ms");
  }
  if (lockout_ms < det_window_ms) throw ConfigError("detector lockout_ms must be >= det_window_ms");
}

std::vector<double> aggregate_abs_mean(const SampleBlock& block) {
  if (block.empty()) throw ShapeError("aggregate_abs_mean: empty block");
  std::vector<double> out(block.length, 0.0);
  for (std::size_t c = 0; c < block.channels; ++c) {
    const auto ch = block.channel(c);
    for (std::size_t t = 0; t < block.length; ++t) out[t] += std::abs(static_cast<double>(ch[t]));
  }
  const double inv = 1.0 / static_cast<double>(block.channels);
  for (double& v : out) v *= inv;
  return out;
}

double median(std::span<const double> values) {
  if (values.empty()) throw InvalidArgumentError("median of an empty signal");
  std::vector<double> v(values.begin(), values.end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double mad(std::span<const double> values) {
  if (values.empty()) throw InvalidArgumentError("MAD of an empty signal");
  const double m = median(values);
  std::vector<double> dev(values.size());
  std::transform(values.begin(), values.end(), dev.begin(), [m](double x) { return std::abs(x - m); });
  return median(dev);
}

Thresholds compute_thresholds(std::span<const double> aggregated, const DetectorConfig& cfg) {
  Thresholds th;
  th.median = median(aggregated);
  th.mad = mad(aggregated);
  th.high = th.median + cfg.high_gain * th.mad;
  th.low = th.median + cfg.low_gain * th.mad;
  return th;
}

namespace {

std::size_t ms_to_samples(double ms, double fs) {
  return static_cast<std::size_t>(std::llround(ms * fs / 1000.0));
}

struct WindowTest {
  bool hit = false;    // peak above the high threshold and enough occupancy
  bool quiet = false;  // peak at or below the high threshold; re-arms
};

WindowTest test_window(std::span<const double> w, const Thresholds& th, double occupancy) {
  double peak = -std::numeric_limits<double>::infinity();
  std::size_t above = 0;
  for (double v : w) {
    peak = std::max(peak, v);
    above += v > th.low ? 1 : 0;
  }
  return {peak > th.high && static_cast<double>(above) >= occupancy * static_cast<double>(w.size()),
          peak <= th.high};
}

}  // namespace

std::vector<std::size_t> scan_windows(std::span<const double> aggregated, const Thresholds& th,
                                      const DetectorConfig& cfg, double sample_rate_hz) {
  const std::size_t win = std::max<std::size_t>(1, ms_to_samples(cfg.det_window_ms, sample_rate_hz));
  const std::size_t hop = std::max<std::size_t>(1, ms_to_samples(cfg.hop_ms, sample_rate_hz));
  const std::size_t lock = ms_to_samples(cfg.lockout_ms, sample_rate_hz);

  std::vector<std::size_t> starts;
  bool armed = true;
  std::size_t locked_until = 0;
  for (std::size_t s = 0; s + win <= aggregated.size(); s += hop) {
    const auto t = test_window(aggregated.subspan(s, win), th, cfg.occupancy_frac);
    if (t.quiet) armed = true;
    if (!t.hit) continue;
    if (s < locked_until || (cfg.require_rearm && !armed)) continue;
    starts.push_back(s);
    locked_until = s + lock;
    armed = false;
  }
  return starts;
}

EventAnnotation detect_events(const dsp::ChunkedStream& stream, const DetectorConfig& cfg) {
  cfg.validate();
  dsp::FilterSpec band = cfg.band;
  band.sample_rate_hz = stream.sample_rate_hz;
  dsp::StreamFilter filter(dsp::design_bandpass(band), stream.channels);

  std::vector<double> env;
  env.reserve(stream.total_length());
  for (const auto& chunk : stream.chunks) {
    const auto part = aggregate_abs_mean(filter.process(chunk));
    env.insert(env.end(), part.begin(), part.end());
  }
  const std::size_t win = ms_to_samples(cfg.det_window_ms, stream.sample_rate_hz);
  if (env.size() <= win) throw InvalidArgumentError("stream shorter than the detection window");

  const Thresholds th = compute_thresholds(env, cfg);
  EventAnnotation ann;
  ann.sample_rate_hz = stream.sample_rate_hz;
  for (std::size_t s : scan_windows(env, th, cfg, stream.sample_rate_hz)) {
    ann.events.push_back({static_cast<double>(s) / stream.sample_rate_hz, std::nullopt,
                          AnnotationSource::kAutomatic});
  }
  return ann;
}

EventAnnotation detect_events(const SampleBlock& samples, double sample_rate_hz,
                              const DetectorConfig& cfg) {
  dsp::ChunkedStream s{samples.channels, sample_rate_hz, {samples}};
  return detect_events(s, cfg);
}

StreamingDetector::StreamingDetector(const DetectorConfig& cfg, std::size_t channels,
                                     double sample_rate_hz, double history_sec, double refresh_sec)
    : cfg_(cfg), fs_(sample_rate_hz),
      filter_(dsp::design_bandpass({cfg.band.low_cut_hz, cfg.band.high_cut_hz, sample_rate_hz}),
              channels),
      window_(std::max<std::size_t>(1, ms_to_samples(cfg.det_window_ms, sample_rate_hz))),
      hop_(std::max<std::size_t>(1, ms_to_samples(cfg.hop_ms, sample_rate_hz))),
      lockout_(ms_to_samples(cfg.lockout_ms, sample_rate_hz)),
      history_(static_cast<std::size_t>(std::llround(history_sec * sample_rate_hz))),
      refresh_(std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(refresh_sec * sample_rate_hz)))) {
  cfg_.validate();
  if (history_ < window_) throw ConfigError("streaming history must cover at least one detection window");
  next_refresh_ = history_;
}

void StreamingDetector::refresh_thresholds() {
  const std::size_t n = std::min(history_, env_.size());
  std::vector<double> tail(env_.end() - static_cast<std::ptrdiff_t>(n), env_.end());
  th_ = compute_thresholds(tail, cfg_);
}

std::vector<double> StreamingDetector::push(const SampleBlock& chunk) {
  const auto part = aggregate_abs_mean(filter_.process(chunk));
  std::vector<double> onsets;
  for (double v : part) {
    env_.push_back(v);
    ++total_;
    if (total_ >= next_refresh_) {
      refresh_thresholds();
      next_refresh_ += refresh_;
    }
    while (th_ && next_start_ + window_ <= total_) {
      const std::size_t s = next_start_;
      next_start_ += hop_;
      std::vector<double> w(env_.begin() + static_cast<std::ptrdiff_t>(s - env_offset_),
                            env_.begin() + static_cast<std::ptrdiff_t>(s - env_offset_ + window_));
      const auto t = test_window(w, *th_, cfg_.occupancy_frac);
      if (t.quiet) armed_ = true;
      if (!t.hit) continue;
      if (s < locked_until_ || (cfg_.require_rearm && !armed_)) continue;
      onsets.push_back(static_cast<double>(s) / fs_);
      locked_until_ = s + lockout_;
      armed_ = false;
    }
    if (!th_) next_start_ = total_ > window_ ? std::max(next_start_, ((total_ - window_) / hop_) * hop_) : 0;
    const std::size_t keep_from = std::min(next_start_, total_ > history_ ? total_ - history_ : 0);
    while (env_offset_ < keep_from) {
      env_.pop_front();
      ++env_offset_;
    }
  }
  return onsets;
}

std::size_t AnnotationReport::automated_count() const {
  return static_cast<std::size_t>(std::count_if(files.begin(), files.end(),
                                                [](const FileReport& f) { return !f.needs_review; }));
}

double AnnotationReport::automation_rate() const {
  if (files.empty()) return 0.0;
  return static_cast<double>(automated_count()) / static_cast<double>(files.size());
}

AnnotationReport annotate_corpus(std::span<const CorpusFile> files, const DetectorConfig& cfg,
                                 std::optional<std::size_t> expected_count) {
  AnnotationReport report;
  for (const auto& f : files) {
    Recording rec;
    try {
      rec = load_recording(f.path);
    } catch (const Error& e) {
      throw IoError("annotate: cannot read " + f.path.string() + ": " + e.what());
    }
    EventAnnotation ann = detect_events(rec.samples, rec.sample_rate_hz, cfg);
    ann.recording_id = f.recording_id;
    FileReport fr{f.recording_id, ann.events.size(), false};
    if (expected_count && ann.events.size() != *expected_count) fr.needs_review = true;
    report.files.push_back(fr);
    report.annotations.push_back(std::move(ann));
  }
  return report;
}

}  // namespace surfgest::detect
