#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "surfgest/annotation.hpp"
#include "surfgest/recording.hpp"
#include "surfgest/types.hpp"

namespace surfgest {

// ---------------------------------------------------------------------------
// Dataset index manifest

struct IndexEntry {
  std::string id;
  SessionKey key;
  // Relative paths are resolved against DatasetIndex::root.
  std::filesystem::path recording;
  std::optional<std::filesystem::path> truth;       // ground-truth / protocol annotation
  std::optional<std::filesystem::path> annotation;  // detector output, possibly corrected
};

struct DatasetIndex {
  std::filesystem::path root;
  double sample_rate_hz = 1000.0;
  std::size_t channels = 4;
  std::vector<IndexEntry> entries;

  std::vector<SessionKey> keys() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  const IndexEntry* find(const SessionKey& key) const;
};

// JSON: {"sample_rate_hz", "channels", "recordings": [{"id", "participant",
// "session", "path", "truth"?, "annotation"?}]}. root is the file's directory.
void save_index(const std::filesystem::path& path, const DatasetIndex& index);
DatasetIndex load_index(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Windows

struct GestureWindow {
  SampleBlock samples;
  GestureClass label = GestureClass::kSwipeLeft;
  int participant_id = 0;
  int session_id = 0;
  double onset_sec = 0.0;

  SessionKey key() const { return {participant_id, session_id}; }
};

struct SequenceResult {
  std::vector<GestureWindow> windows;
  std::vector<std::string> warnings;  // one per dropped event
};

// Samples per window; throws ConfigError unless window_ms * fs / 1000 is a
// positive integer.
std::size_t window_samples(double window_ms, double sample_rate_hz);

// Cuts one window per labelled onset, starting pre_onset_frac * window_ms
// before it. Events whose window leaves the recording, or that carry no
// label, are dropped with a warning. Throws ConfigError on sample-rate
// mismatch between recording and annotation.
SequenceResult sequence_windows(const Recording& rec, const EventAnnotation& ann, double window_ms,
                                double pre_onset_frac);

// Contiguous model-ready windows, layout [n][channel][time].
struct WindowSet {
  std::size_t channels = 0;
  std::size_t length = 0;
  double sample_rate_hz = 1000.0;  // effective rate after decimation
  std::vector<float> data;
  std::vector<int> labels;
  std::vector<SessionKey> keys;
  std::vector<double> onsets;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t stride() const noexcept { return channels * length; }
  std::span<const float> sample(std::size_t i) const { return {data.data() + i * stride(), stride()}; }

  // Throws ShapeError if the block's shape differs from earlier windows.
  void add(const SampleBlock& block, int label, SessionKey key, double onset_sec);
  void append(const WindowSet& other);
  WindowSet subset(std::span<const std::size_t> indices) const;
  // Indices of windows whose session is in keys.
  std::vector<std::size_t> select(std::span<const SessionKey> keys) const;
  // Keeps only labels < num_classes (4 keeps the swipe subset).
  WindowSet restrict_classes(std::size_t num_classes) const;

  bool operator==(const WindowSet&) const = default;
};

// Binary window store: magic "VWIN", u16 version, u64 count, u16 channels,
// u32 length, f64 sample rate, then per window u8 label, u16 participant,
// u16 session, f64 onset, float32[channels * length]. Little-endian.
void store_windows(const std::filesystem::path& path, const WindowSet& set);
WindowSet load_windows(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Cross-validation splits

enum class SplitMethod {
  kPerSubject,      // PS: each participant alone, session-level folds
  kLoso,            // leave one subject out
  kAos,             // LOSO plus the held-out subject's first session in train
  kPooledSessions,  // session folds pooled over all participants (grid search)
};

std::string_view split_name(SplitMethod m);
std::optional<SplitMethod> parse_split(std::string_view name);

struct Fold {
  std::vector<SessionKey> train;
  std::vector<SessionKey> test;
  int participant = -1;  // held-out / evaluated participant, -1 when pooled
};

struct SplitPlan {
  SplitMethod method = SplitMethod::kPerSubject;
  std::vector<Fold> folds;
};

struct SplitParams {
  // Session folds for PS and pooled splits. With folds == 0 the count is
  // sessions / test_sessions.
  std::size_t folds = 0;
  std::size_t test_sessions = 2;
};

// Throws ConfigError when a participant's session count does not divide into
// the requested folds, or when AOS has a participant with a single session.
SplitPlan make_splits(std::span<const SessionKey> keys, SplitMethod method,
                      const SplitParams& params = {});

std::string split_plan_json(const SplitPlan& plan);

}  // namespace surfgest
