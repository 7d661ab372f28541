#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "surfgest/annotation.hpp"
#include "surfgest/dataset.hpp"
#include "surfgest/recording.hpp"

namespace surfgest::synth {

// Sensor cross: two channels on the X axis, two on the Y axis.
enum Channel : std::size_t { kXMinus = 0, kXPlus = 1, kYMinus = 2, kYPlus = 3 };
inline constexpr std::size_t kCrossChannels = 4;

struct SynthConfig {
  double sample_rate_hz = 1000.0;
  std::size_t channels = kCrossChannels;
  std::size_t reps_per_class = 10;  // 6 classes -> 60 events per session

  double gap_mean_sec = 2.0;  // onset-to-onset
  double gap_jitter_sec = 0.3;
  double min_quiet_sec = 0.4;  // silence between the end of one event and the next onset
  double min_onset_gap_sec = 0.5;
  double lead_in_sec = 1.0;
  double tail_sec = 1.5;

  double burst_low_hz = 250.0;
  double burst_high_hz = 350.0;
  double swipe_min_ms = 600.0;
  double swipe_max_ms = 900.0;
  double tap_min_ms = 80.0;
  double tap_max_ms = 150.0;
  int knock_min_impulses = 2;
  int knock_max_impulses = 3;
  double knock_impulse_min_ms = 30.0;
  double knock_impulse_max_ms = 60.0;
  double knock_gap_min_ms = 5.0;  // silence between impulses
  double knock_gap_max_ms = 15.0;
  // Envelope rise time, capped at half the event (0.3 for knock trains);
  // the fall of single bursts spans their last quarter.
  double attack_ms = 60.0;
  double lag_min_ms = 5.0;
  double lag_max_ms = 15.0;

  // Gain of the trailing sensor relative to the leading one along the swipe
  // axis, and of the orthogonal pair, in dB.
  double trailing_gain_db = -4.0;
  double orthogonal_gain_db = -8.0;

  double snr_db = 10.0;          // in-band, burst power over noise power
  double noise_rms_v = 110.5e-6;  // white sensor noise floor
  std::uint64_t seed = 0;

  std::size_t events_per_session() const { return reps_per_class * kNumGestureClasses; }
  // Throws ConfigError on non-positive durations, non-finite SNR (-inf is
  // allowed and means no signal), or a burst band outside (0, fs/2).
  void validate() const;
};

// Per-participant habits drawn from (seed, participant).
struct ParticipantStyle {
  double duration_scale = 1.0;
  double lag_scale = 1.0;
  double carrier_shift_hz = 0.0;
  double gradient_scale = 1.0;
  // Sensor coupling per channel; applied to every event of the participant.
  std::vector<double> channel_gain;
};

ParticipantStyle participant_style(const SynthConfig& cfg, int participant);

// Random draws for one event, independent of its class so that two classes
// rendered from the same draws differ only by construction.
struct EventDraws {
  double swipe_ms = 0.0;
  double tap_ms = 0.0;
  int knock_impulses = 2;
  std::vector<double> knock_impulse_ms;
  std::vector<double> knock_gap_ms;
  double lag_ms = 0.0;
  std::vector<double> carrier_hz;  // component frequencies
  // Carrier phases per sensor role: leading, trailing, orthogonal A, orthogonal B.
  std::vector<std::vector<double>> phases;
};

EventDraws draw_event(const SynthConfig& cfg, const ParticipantStyle& style, std::mt19937_64& rng);

// Noise-free unit-level rendering of one event. Channel c of the returned
// block starts at relative sample 0 = event onset (earliest arrival).
struct RenderedEvent {
  SampleBlock samples;
  std::size_t active_samples = 0;  // samples under the undelayed envelope
};

RenderedEvent render_event(const SynthConfig& cfg, const ParticipantStyle& style, const EventDraws& draws,
                           GestureClass g);

struct SessionParts {
  Recording recording;    // clean + noise
  EventAnnotation truth;  // exact onsets and labels
  SampleBlock clean;
  SampleBlock noise;
  std::vector<std::size_t> onset_samples;
  std::vector<std::size_t> event_lengths;  // rendered span incl. lags
  std::vector<std::size_t> active_samples;
};

SessionParts generate_session_parts(const SynthConfig& cfg, int participant_id, int session_id);

inline std::pair<Recording, EventAnnotation> generate_session(const SynthConfig& cfg, int participant_id,
                                                              int session_id) {
  auto parts = generate_session_parts(cfg, participant_id, session_id);
  return {std::move(parts.recording), std::move(parts.truth)};
}

std::string recording_id(int participant_id, int session_id);

// Writes recordings/<id>.vibr, truth/<id>.json and index.json under out_dir.
// Participants and sessions are numbered from 1. Returns the index.
DatasetIndex generate_corpus(const SynthConfig& cfg, int participants, int sessions,
                             const std::filesystem::path& out_dir);

}  // namespace surfgest::synth
