#include "surfgest/pipeline.hpp"

#include <cmath>

#include "surfgest/error.hpp"

namespace surfgest {

std::string placement_name(FilterPlacement p) {
  switch (p) {
    case FilterPlacement::kNone: return "none";
    case FilterPlacement::kStream: return "stream";
    case FilterPlacement::kWindow: return "window";
  }
  return "?";
}

FilterPlacement parse_placement(const std::string& name) {
  if (name == "none") return FilterPlacement::kNone;
  if (name == "stream") return FilterPlacement::kStream;
  if (name == "window") return FilterPlacement::kWindow;
  throw ConfigError("unknown filter placement '" + name + "' (expected none, stream or window)");
}

void PreprocessConfig::validate(double sample_rate_hz) const {
  if (filter != FilterPlacement::kNone) dsp::FilterSpec{low_cut_hz, high_cut_hz, sample_rate_hz}.validate();
  window_samples(window_ms, sample_rate_hz);
  if (!(pre_onset_frac >= 0.0 && pre_onset_frac <= 1.0)) throw ConfigError("pre_onset_frac must be in [0, 1]");
  if (downsample < 1) throw ConfigError("downsample factor must be >= 1");
}

std::size_t PreprocessConfig::output_length(double sample_rate_hz) const {
  return dsp::downsampled_length(window_samples(window_ms, sample_rate_hz), downsample);
}

std::vector<LoadedSession> load_sessions(const DatasetIndex& index, LabelSource source) {
  std::vector<LoadedSession> out;
  out.reserve(index.entries.size());
  for (const auto& e : index.entries) {
    const std::filesystem::path* ann_path = nullptr;
    if (source != LabelSource::kTruth && e.annotation) ann_path = &*e.annotation;
    if (source != LabelSource::kAnnotation && !ann_path && e.truth) ann_path = &*e.truth;
    if (!ann_path) {
      throw ConfigError("recording " + e.id + " has no " +
                        (source == LabelSource::kAnnotation ? "annotation" : "label source") +
                        " listed in the index");
    }
    LoadedSession s{load_recording(index.resolve(e.recording)), load_annotation(index.resolve(*ann_path))};
    if (s.recording.key() != e.key) {
      throw ConfigError("recording " + e.id + " header disagrees with the index on participant/session");
    }
    out.push_back(std::move(s));
  }
  return out;
}

WindowBuild build_windows(const std::vector<LoadedSession>& sessions, const PreprocessConfig& cfg) {
  WindowBuild out;
  for (const auto& s : sessions) {
    const double fs = s.recording.sample_rate_hz;
    cfg.validate(fs);
    dsp::Cascade cascade;
    if (cfg.filter != FilterPlacement::kNone) cascade = dsp::design_bandpass({cfg.low_cut_hz, cfg.high_cut_hz, fs});

    const Recording* source = &s.recording;
    Recording filtered;
    if (cfg.filter == FilterPlacement::kStream) {
      filtered = s.recording;
      filtered.samples = dsp::filter_block(cascade, s.recording.samples);
      source = &filtered;
    }

    auto seq = sequence_windows(*source, s.annotation, cfg.window_ms, cfg.pre_onset_frac);
    const std::string tag = "P" + std::to_string(s.recording.participant_id) + "/S" +
                            std::to_string(s.recording.session_id) + ": ";
    for (auto& w : seq.warnings) out.warnings.push_back(tag + w);
    for (auto& w : seq.windows) {
      SampleBlock block = std::move(w.samples);
      if (cfg.filter == FilterPlacement::kWindow) block = dsp::filter_block(cascade, block);
      if (cfg.normalize) block = dsp::minmax_normalize(block);
      if (cfg.downsample > 1) block = dsp::downsample(block, cfg.downsample, cfg.anti_alias);
      out.windows.add(block, static_cast<int>(w.label), w.key(), w.onset_sec);
    }
    out.windows.sample_rate_hz = fs / cfg.downsample;
  }
  return out;
}

model::SepCnnConfig model_for(const model::SepCnnConfig& base, const WindowSet& windows) {
  model::SepCnnConfig cfg = base;
  cfg.in_channels = windows.channels;
  cfg.input_length = windows.length;
  return cfg;
}

}  // namespace surfgest
