#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surfgest/annotation.hpp"
#include "surfgest/dsp.hpp"
#include "surfgest/recording.hpp"

namespace surfgest::detect {

struct DetectorConfig {
  // The band's sample rate is replaced by the stream's rate at detection time.
  dsp::FilterSpec band{225.0, 375.0, 1000.0};
  double high_gain = 4.0;
  double low_gain = 2.0;
  double occupancy_frac = 0.40;
  double det_window_ms = 100.0;
  double hop_ms = 10.0;
  double lockout_ms = 500.0;
  // After an emission the detector only fires again once some window's peak
  // has dropped to the high threshold, so a gesture longer than the lockout
  // still yields one event.
  bool require_rearm = true;

  void validate() const;
};

// out[t] = mean over channels of |x[c][t]|.
std::vector<double> aggregate_abs_mean(const SampleBlock& block);

// Even lengths average the two central order statistics. Throws on empty input.
double median(std::span<const double> values);
// median(|x - median(x)|). Throws InvalidArgumentError on empty input.
double mad(std::span<const double> values);

struct Thresholds {
  double median = 0.0;
  double mad = 0.0;
  double high = 0.0;
  double low = 0.0;
};

Thresholds compute_thresholds(std::span<const double> aggregated, const DetectorConfig& cfg);

// Sliding-window trigger over an aggregated envelope with fixed thresholds.
// Returns window start indices of emitted events.
std::vector<std::size_t> scan_windows(std::span<const double> aggregated, const Thresholds& th,
                                      const DetectorConfig& cfg, double sample_rate_hz);

// Offline detection: band-pass, aggregate, thresholds over the whole
// recording, sliding window with lockout. Timestamps are window starts.
EventAnnotation detect_events(const dsp::ChunkedStream& stream, const DetectorConfig& cfg);
EventAnnotation detect_events(const SampleBlock& samples, double sample_rate_hz,
                              const DetectorConfig& cfg);

// Online variant: thresholds come from a trailing history of the aggregated
// envelope and are refreshed periodically. Not used for corpus annotation.
class StreamingDetector {
 public:
  StreamingDetector(const DetectorConfig& cfg, std::size_t channels, double sample_rate_hz,
                    double history_sec = 10.0, double refresh_sec = 1.0);

  // Feeds one chunk; returns onsets (seconds from stream start) emitted by it.
  std::vector<double> push(const SampleBlock& chunk);

 private:
  void refresh_thresholds();

  DetectorConfig cfg_;
  double fs_;
  dsp::StreamFilter filter_;
  std::size_t window_;
  std::size_t hop_;
  std::size_t lockout_;
  std::size_t history_;
  std::size_t refresh_;
  std::deque<double> env_;       // aggregated envelope, trailing
  std::size_t env_offset_ = 0;   // absolute index of env_.front()
  std::size_t total_ = 0;        // samples consumed
  std::size_t next_start_ = 0;   // next window start to evaluate
  std::size_t next_refresh_ = 0;
  std::optional<Thresholds> th_;
  bool armed_ = true;
  std::size_t locked_until_ = 0;
};

struct CorpusFile {
  std::string recording_id;
  std::filesystem::path path;
};

struct FileReport {
  std::string recording_id;
  std::size_t detected = 0;
  bool needs_review = false;
};

struct AnnotationReport {
  std::vector<FileReport> files;
  std::vector<EventAnnotation> annotations;  // parallel to files

  std::size_t automated_count() const;
  // Fraction of files that need no manual review.
  double automation_rate() const;
};

// Runs detection per file. With expected_count set, a file whose count differs
// is flagged for review. Throws IoError naming an unreadable file.
AnnotationReport annotate_corpus(std::span<const CorpusFile> files, const DetectorConfig& cfg,
                                 std::optional<std::size_t> expected_count);

}  // namespace surfgest::detect
