#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "surfgest/annotation.hpp"
#include "surfgest/dataset.hpp"
#include "surfgest/dsp.hpp"
#include "surfgest/model.hpp"
#include "surfgest/recording.hpp"

namespace surfgest {

// Where the band-pass runs: on the continuous recording before windowing,
// on each extracted window, or not at all.
enum class FilterPlacement { kNone, kStream, kWindow };

std::string placement_name(FilterPlacement p);
FilterPlacement parse_placement(const std::string& name);

// Block order is fixed: filter -> windowing -> normalization -> downsampling,
// with the filter moved after windowing for kWindow.
struct PreprocessConfig {
  FilterPlacement filter = FilterPlacement::kStream;
  double low_cut_hz = 225.0;
  double high_cut_hz = 375.0;
  double window_ms = 1250.0;
  double pre_onset_frac = 0.1;
  bool normalize = true;
  int downsample = 1;
  bool anti_alias = false;

  // Throws ConfigError (or InvalidSpecError for the band) when the settings
  // cannot run at sample_rate_hz.
  void validate(double sample_rate_hz) const;
  std::size_t output_length(double sample_rate_hz) const;

  bool operator==(const PreprocessConfig&) const = default;
};

enum class LabelSource {
  kAnnotation,        // detector output (labelled), required
  kTruth,             // ground-truth / protocol annotation, required
  kPreferAnnotation,  // annotation when the index lists one, else truth
};

struct LoadedSession {
  Recording recording;
  EventAnnotation annotation;
};

std::vector<LoadedSession> load_sessions(const DatasetIndex& index, LabelSource source);

struct WindowBuild {
  WindowSet windows;
  std::vector<std::string> warnings;  // dropped events, prefixed with the session
};

WindowBuild build_windows(const std::vector<LoadedSession>& sessions, const PreprocessConfig& cfg);

// Model input shape follows the window store; everything else from base.
model::SepCnnConfig model_for(const model::SepCnnConfig& base, const WindowSet& windows);

}  // namespace surfgest
