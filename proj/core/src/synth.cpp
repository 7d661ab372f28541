#include "surfgest/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>

#include "surfgest/error.hpp"

namespace surfgest::synth {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (!(sample_rate_hz > 0.0)) throw ConfigError("synth: sample_rate_hz must be positive");
  if (channels != kCrossChannels) throw ConfigError("synth: the sensor cross layout has exactly 4 channels");
  if (reps_per_class == 0) throw ConfigError("synth: reps_per_class must be positive");
  for (double d : {gap_mean_sec, lead_in_sec, tail_sec, swipe_min_ms, swipe_max_ms, tap_min_ms, tap_max_ms,
                   knock_impulse_min_ms, knock_impulse_max_ms, knock_gap_min_ms, knock_gap_max_ms, lag_min_ms, attack_ms,
                   lag_max_ms, min_quiet_sec, min_onset_gap_sec}) {
    if (!(d > 0.0)) throw ConfigError("synth: all durations must be positive");
  }
  if (gap_jitter_sec < 0.0 || gap_jitter_sec >= gap_mean_sec) throw ConfigError("synth: gap jitter out of range");
  if (swipe_min_ms > swipe_max_ms || tap_min_ms > tap_max_ms || knock_impulse_min_ms > knock_impulse_max_ms ||
      knock_gap_min_ms > knock_gap_max_ms || lag_min_ms > lag_max_ms) {
    throw ConfigError("synth: a duration range has min > max");
  }
  if (knock_min_impulses < 1 || knock_min_impulses > knock_max_impulses) {
    throw ConfigError("synth: knock impulse count range invalid");
  }
  if (!(burst_low_hz > 0.0) || !(burst_high_hz > burst_low_hz) || !(burst_high_hz < sample_rate_hz / 2.0)) {
    throw ConfigError("synth: burst band must lie inside (0, fs/2)");
  }
  if (std::isnan(snr_db) || snr_db == std::numeric_limits<double>::infinity()) {
    throw ConfigError("synth: snr_db must be finite (or -inf for no signal)");
  }
  if (!(noise_rms_v >= 0.0)) throw ConfigError("synth: noise_rms_v must be non-negative");
}

namespace {

constexpr std::size_t kCarrierComponents = 1;
constexpr double kFallFraction = 0.25;     // of the event span
constexpr double kMaxRiseFraction = 0.5;   // of the event span
constexpr double kMaxTrainRiseFraction = 0.3;
constexpr double kGateEdgeMs = 3.0;        // knock impulse edges

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

double raised_cosine(double x) { return 0.5 * (1.0 - std::cos(std::numbers::pi * x)); }

struct Pulse {
  double start_ms;
  double length_ms;
};

// Event amplitude over [0, span_ms]: raised-cosine rise over
// min(attack, half the span), fall over the last quarter. Impulse trains rise
// over at most 0.3 of the span and are gated open only inside their pulses,
// with no overall fall.
struct Envelope {
  double span_ms = 0.0;
  double rise_ms = 0.0;
  std::vector<Pulse> gates;

  double operator()(double t) const {
    if (t < 0.0 || t > span_ms) return 0.0;
    const double fall_ms = gates.empty() ? kFallFraction * span_ms : 0.0;
    double a = 1.0;
    if (t < rise_ms) a = raised_cosine(t / rise_ms);
    if (t > span_ms - fall_ms) a *= raised_cosine((span_ms - t) / fall_ms);
    if (gates.empty()) return a;
    for (const auto& g : gates) {
      const double u = t - g.start_ms;
      if (u < 0.0 || u > g.length_ms) continue;
      const double edge = std::min(kGateEdgeMs, 0.5 * g.length_ms);
      return a * raised_cosine(std::min({u, g.length_ms - u, edge}) / edge);
    }
    return 0.0;
  }
};

// Adds gain * envelope * carrier delayed by lag_ms. skew tilts the envelope
// linearly across the event (+ early-heavy, - late-heavy).
void add_channel(std::span<float> out, double fs, const Envelope& env, double lag_ms, double gain, double skew,
                 const std::vector<double>& carrier_hz, const std::vector<double>& phases) {
  const double norm = 1.0 / std::sqrt(static_cast<double>(carrier_hz.size()));
  const auto first = static_cast<std::size_t>(std::ceil(lag_ms * fs / 1000.0));
  for (std::size_t n = first; n < out.size(); ++n) {
    const double t_ms = static_cast<double>(n) * 1000.0 / fs - lag_ms;
    if (t_ms > env.span_ms) break;
    const double e = env(t_ms) * (1.0 + skew * (0.5 - t_ms / env.span_ms));
    if (e == 0.0) continue;
    const double t = static_cast<double>(n) / fs;
    double carrier = 0.0;
    for (std::size_t k = 0; k < carrier_hz.size(); ++k) {
      carrier += std::sin(2.0 * std::numbers::pi * carrier_hz[k] * t + phases[k]);
    }
    out[n] += static_cast<float>(gain * e * carrier * norm);
  }
}

// Power in [lo, hi] Hz per sample of a finite block, by direct DFT.
double band_energy(std::span<const float> x, double fs, double lo, double hi) {
  const std::size_t n = x.size();
  const auto k_lo = static_cast<std::size_t>(std::ceil(lo * static_cast<double>(n) / fs));
  const auto k_hi = std::min(static_cast<std::size_t>(std::floor(hi * static_cast<double>(n) / fs)), (n - 1) / 2);
  double energy = 0.0;
  for (std::size_t k = std::max<std::size_t>(k_lo, 1); k <= k_hi; ++k) {
    std::complex<double> acc{0.0, 0.0};
    const double w = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    for (std::size_t t = 0; t < n; ++t) acc += static_cast<double>(x[t]) * std::polar(1.0, w * static_cast<double>(t));
    energy += std::norm(acc);
  }
  return 2.0 * energy / static_cast<double>(n);
}

}  // namespace

ParticipantStyle participant_style(const SynthConfig& cfg, int participant) {
  auto rng = seeded(cfg.seed, static_cast<std::uint64_t>(participant), 0, 1);
  ParticipantStyle s;
  s.duration_scale = uniform(rng, 0.85, 1.15);
  s.lag_scale = uniform(rng, 0.8, 1.2);
  s.carrier_shift_hz = uniform(rng, -0.1, 0.1) * (cfg.burst_high_hz - cfg.burst_low_hz);
  s.gradient_scale = uniform(rng, 0.8, 1.2);
  s.channel_gain.resize(cfg.channels);
  for (auto& g : s.channel_gain) g = uniform(rng, 0.6, 1.4);
  return s;
}

EventDraws draw_event(const SynthConfig& cfg, const ParticipantStyle& style, std::mt19937_64& rng) {
  EventDraws d;
  d.swipe_ms = uniform(rng, cfg.swipe_min_ms, cfg.swipe_max_ms) * style.duration_scale;
  d.tap_ms = uniform(rng, cfg.tap_min_ms, cfg.tap_max_ms) * style.duration_scale;
  d.knock_impulses = std::uniform_int_distribution<int>(cfg.knock_min_impulses, cfg.knock_max_impulses)(rng);
  for (int i = 0; i < cfg.knock_max_impulses; ++i) {
    d.knock_impulse_ms.push_back(uniform(rng, cfg.knock_impulse_min_ms, cfg.knock_impulse_max_ms));
    d.knock_gap_ms.push_back(uniform(rng, cfg.knock_gap_min_ms, cfg.knock_gap_max_ms));
  }
  d.lag_ms = uniform(rng, cfg.lag_min_ms, cfg.lag_max_ms) * style.lag_scale;
  const double margin = 0.2 * (cfg.burst_high_hz - cfg.burst_low_hz);
  for (std::size_t k = 0; k < kCarrierComponents; ++k) {
    const double f = uniform(rng, cfg.burst_low_hz + margin, cfg.burst_high_hz - margin) + style.carrier_shift_hz;
    d.carrier_hz.push_back(f);
  }
  d.phases.assign(4, {});
  for (auto& role : d.phases) {
    for (std::size_t k = 0; k < kCarrierComponents; ++k) role.push_back(uniform(rng, 0.0, 2.0 * std::numbers::pi));
  }
  return d;
}

RenderedEvent render_event(const SynthConfig& cfg, const ParticipantStyle& style, const EventDraws& d,
                           GestureClass g) {
  const double fs = cfg.sample_rate_hz;
  Envelope env;
  double active_ms = 0.0;
  switch (g) {
    case GestureClass::kTap:
      env.span_ms = d.tap_ms;
      break;
    case GestureClass::kKnock: {
      double t = 0.0;
      for (int i = 0; i < d.knock_impulses; ++i) {
        const auto k = static_cast<std::size_t>(i);
        env.gates.push_back({t, d.knock_impulse_ms[k]});
        env.span_ms = t + d.knock_impulse_ms[k];
        t += d.knock_impulse_ms[k] + d.knock_gap_ms[k];
      }
      break;
    }
    default:
      env.span_ms = d.swipe_ms;
      break;
  }
  const double rise_cap = env.gates.empty() ? kMaxRiseFraction : kMaxTrainRiseFraction;
  env.rise_ms = std::min(cfg.attack_ms, rise_cap * env.span_ms);
  if (env.gates.empty()) {
    active_ms = env.span_ms;
  } else {
    for (const auto& p : env.gates) active_ms += p.length_ms;
  }
  const double span_ms = env.span_ms + d.lag_ms;
  const auto length = static_cast<std::size_t>(std::ceil(span_ms * fs / 1000.0)) + 2;

  RenderedEvent ev{SampleBlock(cfg.channels, length),
                   static_cast<std::size_t>(std::llround(active_ms * fs / 1000.0))};
  const double trail_gain = std::pow(10.0, cfg.trailing_gain_db / 20.0);
  const double orth_gain = std::pow(10.0, cfg.orthogonal_gain_db / 20.0);
  const double skew = 0.8 * style.gradient_scale;

  auto ch = [&](std::size_t c) { return ev.samples.channel(c); };
  if (is_swipe(g)) {
    // Motion toward +X: X- is reached first and is louder early on.
    std::size_t lead = kXMinus, trail = kXPlus, orth_a = kYMinus, orth_b = kYPlus;
    switch (g) {
      case GestureClass::kSwipeLeft: std::swap(lead, trail); break;
      case GestureClass::kSwipeUp:
        lead = kYMinus, trail = kYPlus, orth_a = kXMinus, orth_b = kXPlus;
        break;
      case GestureClass::kSwipeDown:
        lead = kYPlus, trail = kYMinus, orth_a = kXMinus, orth_b = kXPlus;
        break;
      default: break;
    }
    add_channel(ch(lead), fs, env, 0.0, 1.0, skew, d.carrier_hz, d.phases[0]);
    add_channel(ch(trail), fs, env, d.lag_ms, trail_gain, -skew, d.carrier_hz, d.phases[1]);
    add_channel(ch(orth_a), fs, env, 0.5 * d.lag_ms, orth_gain, 0.0, d.carrier_hz, d.phases[2]);
    add_channel(ch(orth_b), fs, env, 0.5 * d.lag_ms, orth_gain, 0.0, d.carrier_hz, d.phases[3]);
  } else {
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      add_channel(ch(c), fs, env, 0.0, 1.0, 0.0, d.carrier_hz, d.phases[c]);
    }
  }
  return ev;
}

std::string recording_id(int participant_id, int session_id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "P%02d_S%02d", participant_id, session_id);
  return buf;
}

SessionParts generate_session_parts(const SynthConfig& cfg, int participant_id, int session_id) {
  cfg.validate();
  const double fs = cfg.sample_rate_hz;
  const auto style = participant_style(cfg, participant_id);
  auto rng = seeded(cfg.seed, static_cast<std::uint64_t>(participant_id), static_cast<std::uint64_t>(session_id), 2);
  auto noise_rng = seeded(cfg.seed, static_cast<std::uint64_t>(participant_id), static_cast<std::uint64_t>(session_id), 3);

  std::vector<GestureClass> order;
  for (auto g : kAllGestures) order.insert(order.end(), cfg.reps_per_class, g);
  std::shuffle(order.begin(), order.end(), rng);

  const double noise_inband = cfg.noise_rms_v * cfg.noise_rms_v * 2.0 * (cfg.burst_high_hz - cfg.burst_low_hz) / fs;
  const double snr_lin = std::pow(10.0, cfg.snr_db / 10.0);

  std::vector<RenderedEvent> events;
  SessionParts parts;
  double prev_onset = -1.0;
  double prev_end = -1.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    RenderedEvent ev = render_event(cfg, style, draw_event(cfg, style, rng), order[i]);
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      for (float& v : ev.samples.channel(c)) v = static_cast<float>(v * style.channel_gain[c]);
    }
    // Scale so the mean in-band power per active sample hits the target SNR.
    double unit = 0.0;
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      unit += band_energy(ev.samples.channel(c), fs, cfg.burst_low_hz, cfg.burst_high_hz);
    }
    unit /= static_cast<double>(cfg.channels) * static_cast<double>(ev.active_samples);
    const double amp = unit > 0.0 ? std::sqrt(snr_lin * noise_inband / unit) : 0.0;
    for (float& v : ev.samples.data) v = static_cast<float>(v * amp);

    double onset = i == 0 ? cfg.lead_in_sec + uniform(rng, 0.0, cfg.gap_jitter_sec)
                          : prev_onset + uniform(rng, cfg.gap_mean_sec - cfg.gap_jitter_sec,
                                                 cfg.gap_mean_sec + cfg.gap_jitter_sec);
    if (i > 0) onset = std::max({onset, prev_end + cfg.min_quiet_sec, prev_onset + cfg.min_onset_gap_sec});
    const auto onset_sample = static_cast<std::size_t>(std::llround(onset * fs));
    onset = static_cast<double>(onset_sample) / fs;
    parts.onset_samples.push_back(onset_sample);
    parts.event_lengths.push_back(ev.samples.length);
    parts.active_samples.push_back(ev.active_samples);
    parts.truth.events.push_back({onset, order[i], AnnotationSource::kGroundTruth});
    prev_onset = onset;
    prev_end = onset + static_cast<double>(ev.samples.length) / fs;
    events.push_back(std::move(ev));
  }

  const auto total = static_cast<std::size_t>(std::llround((prev_end + cfg.tail_sec) * fs));
  parts.clean = SampleBlock(cfg.channels, total);
  for (std::size_t i = 0; i < events.size(); ++i) {
    for (std::size_t c = 0; c < cfg.channels; ++c) {
      auto src = events[i].samples.channel(c);
      auto dst = parts.clean.channel(c).subspan(parts.onset_samples[i], src.size());
      for (std::size_t t = 0; t < src.size(); ++t) dst[t] += src[t];
    }
  }
  parts.noise = SampleBlock(cfg.channels, total);
  std::normal_distribution<double> gauss(0.0, cfg.noise_rms_v);
  for (float& v : parts.noise.data) v = static_cast<float>(gauss(noise_rng));

  parts.recording.participant_id = participant_id;
  parts.recording.session_id = session_id;
  parts.recording.sample_rate_hz = fs;
  parts.recording.samples = SampleBlock(cfg.channels, total);
  for (std::size_t k = 0; k < total * cfg.channels; ++k) {
    parts.recording.samples.data[k] = parts.clean.data[k] + parts.noise.data[k];
  }
  parts.truth.recording_id = recording_id(participant_id, session_id);
  parts.truth.sample_rate_hz = fs;
  return parts;
}

DatasetIndex generate_corpus(const SynthConfig& cfg, int participants, int sessions, const fs::path& out_dir) {
  if (participants < 1 || sessions < 1) throw ConfigError("synth: participants and sessions must be >= 1");
  std::error_code ec;
  fs::create_directories(out_dir / "recordings", ec);
  if (!ec) fs::create_directories(out_dir / "truth", ec);
  if (ec) throw IoError("cannot create corpus directories under " + out_dir.string() + ": " + ec.message());

  DatasetIndex index;
  index.root = out_dir;
  index.sample_rate_hz = cfg.sample_rate_hz;
  index.channels = cfg.channels;
  for (int p = 1; p <= participants; ++p) {
    for (int s = 1; s <= sessions; ++s) {
      auto [rec, truth] = generate_session(cfg, p, s);
      const std::string id = recording_id(p, s);
      const fs::path rec_rel = fs::path("recordings") / (id + ".vibr");
      const fs::path truth_rel = fs::path("truth") / (id + ".json");
      store_recording(out_dir / rec_rel, rec);
      save_annotation(out_dir / truth_rel, truth);
      index.entries.push_back({id, {p, s}, rec_rel, truth_rel, std::nullopt});
    }
  }
  save_index(out_dir / "index.json", index);
  return index;
}

}  // namespace surfgest::synth
