#include "surfgest/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "binary_io.hpp"
#include "json.hpp"
#include "surfgest/error.hpp"

namespace surfgest {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Index

std::vector<SessionKey> DatasetIndex::keys() const {
  std::vector<SessionKey> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.key);
  return out;
}

fs::path DatasetIndex::resolve(const fs::path& p) const { return p.is_absolute() ? p : root / p; }

const IndexEntry* DatasetIndex::find(const SessionKey& key) const {
  for (const auto& e : entries) {
    if (e.key == key) return &e;
  }
  return nullptr;
}

void save_index(const fs::path& path, const DatasetIndex& index) {
  json recs = json::array();
  for (const auto& e : index.entries) {
    json r = {{"id", e.id},
              {"participant", e.key.participant},
              {"session", e.key.session},
              {"path", e.recording.generic_string()}};
    if (e.truth) r["truth"] = e.truth->generic_string();
    if (e.annotation) r["annotation"] = e.annotation->generic_string();
    recs.push_back(std::move(r));
  }
  const json doc = {{"sample_rate_hz", index.sample_rate_hz},
                    {"channels", index.channels},
                    {"recordings", std::move(recs)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

DatasetIndex load_index(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset index " + path.string());
  DatasetIndex index;
  index.root = path.parent_path();
  try {
    const json doc = json::parse(in);
    index.sample_rate_hz = doc.at("sample_rate_hz").get<double>();
    index.channels = doc.at("channels").get<std::size_t>();
    for (const auto& r : doc.at("recordings")) {
      IndexEntry e;
      e.id = r.at("id").get<std::string>();
      e.key = {r.at("participant").get<int>(), r.at("session").get<int>()};
      e.recording = r.at("path").get<std::string>();
      if (r.contains("truth")) e.truth = fs::path(r.at("truth").get<std::string>());
      if (r.contains("annotation")) e.annotation = fs::path(r.at("annotation").get<std::string>());
      index.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return index;
}

// ---------------------------------------------------------------------------
// Windows

std::size_t window_samples(double window_ms, double sample_rate_hz) {
  const double n = window_ms * sample_rate_hz / 1000.0;
  const double rounded = std::round(n);
  if (!(rounded >= 1.0) || std::abs(n - rounded) > 1e-9 * std::max(1.0, n)) {
    throw ConfigError("window of " + std::to_string(window_ms) + " ms is not a whole number of samples at " +
                      std::to_string(sample_rate_hz) + " Hz");
  }
  return static_cast<std::size_t>(rounded);
}

SequenceResult sequence_windows(const Recording& rec, const EventAnnotation& ann, double window_ms,
                                double pre_onset_frac) {
  if (std::abs(rec.sample_rate_hz - ann.sample_rate_hz) > 1e-9) {
    throw ConfigError("annotation sample rate " + std::to_string(ann.sample_rate_hz) +
                      " Hz differs from recording rate " + std::to_string(rec.sample_rate_hz) + " Hz");
  }
  if (pre_onset_frac < 0.0 || pre_onset_frac > 1.0) throw ConfigError("pre_onset_frac must be in [0, 1]");
  const std::size_t len = window_samples(window_ms, rec.sample_rate_hz);
  const double pre_sec = pre_onset_frac * window_ms / 1000.0;

  SequenceResult out;
  for (const auto& e : ann.events) {
    if (!e.label) {
      out.warnings.push_back("event at " + std::to_string(e.t_sec) + " s has no label, dropped");
      continue;
    }
    const double start_sec = e.t_sec - pre_sec;
    const long long start = std::llround(start_sec * rec.sample_rate_hz);
    if (start < 0 || static_cast<std::size_t>(start) + len > rec.samples.length) {
      out.warnings.push_back("event at " + std::to_string(e.t_sec) + " s: window leaves the recording, dropped");
      continue;
    }
    out.windows.push_back({rec.samples.slice(static_cast<std::size_t>(start), len), *e.label,
                           rec.participant_id, rec.session_id, e.t_sec});
  }
  return out;
}

void WindowSet::add(const SampleBlock& block, int label, SessionKey key, double onset_sec) {
  if (labels.empty() && data.empty()) {
    channels = block.channels;
    length = block.length;
  } else if (block.channels != channels || block.length != length) {
    throw ShapeError("window shape " + std::to_string(block.channels) + "x" + std::to_string(block.length) +
                     " differs from set shape " + std::to_string(channels) + "x" + std::to_string(length));
  }
  data.insert(data.end(), block.data.begin(), block.data.end());
  labels.push_back(label);
  keys.push_back(key);
  onsets.push_back(onset_sec);
}

void WindowSet::append(const WindowSet& other) {
  if (other.size() == 0) return;
  if (size() == 0) {
    *this = other;
    return;
  }
  if (other.channels != channels || other.length != length) throw ShapeError("append: window shapes differ");
  data.insert(data.end(), other.data.begin(), other.data.end());
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  keys.insert(keys.end(), other.keys.begin(), other.keys.end());
  onsets.insert(onsets.end(), other.onsets.begin(), other.onsets.end());
}

WindowSet WindowSet::subset(std::span<const std::size_t> indices) const {
  WindowSet out;
  out.channels = channels;
  out.length = length;
  out.sample_rate_hz = sample_rate_hz;
  out.data.reserve(indices.size() * stride());
  for (std::size_t i : indices) {
    auto s = sample(i);
    out.data.insert(out.data.end(), s.begin(), s.end());
    out.labels.push_back(labels[i]);
    out.keys.push_back(keys[i]);
    out.onsets.push_back(onsets[i]);
  }
  return out;
}

std::vector<std::size_t> WindowSet::select(std::span<const SessionKey> wanted) const {
  const std::set<SessionKey> lookup(wanted.begin(), wanted.end());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (lookup.contains(keys[i])) out.push_back(i);
  }
  return out;
}

WindowSet WindowSet::restrict_classes(std::size_t num_classes) const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < size(); ++i) {
    if (labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < num_classes) idx.push_back(i);
  }
  return subset(idx);
}

namespace {
constexpr std::uint16_t kWindowStoreVersion = 1;
}

void store_windows(const fs::path& path, const WindowSet& set) {
  detail::ByteWriter w;
  w.magic("VWIN");
  w.put<std::uint16_t>(kWindowStoreVersion);
  w.put<std::uint64_t>(set.size());
  w.put<std::uint16_t>(static_cast<std::uint16_t>(set.channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.length));
  w.put<double>(set.sample_rate_hz);
  for (std::size_t i = 0; i < set.size(); ++i) {
    w.put<std::uint8_t>(static_cast<std::uint8_t>(set.labels[i]));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(set.keys[i].participant));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(set.keys[i].session));
    w.put<double>(set.onsets[i]);
    for (float v : set.sample(i)) w.put<float>(v);
  }
  w.save(path);
}

WindowSet load_windows(const fs::path& path) {
  auto r = detail::ByteReader::from_file(path);
  r.expect_magic("VWIN");
  const auto version = r.get<std::uint16_t>();
  if (version != kWindowStoreVersion) r.fail("unsupported version " + std::to_string(version), 4);
  const auto count = r.get<std::uint64_t>();
  WindowSet set;
  set.channels = r.get<std::uint16_t>();
  set.length = r.get<std::uint32_t>();
  set.sample_rate_hz = r.get<double>();
  if (set.channels == 0 || set.length == 0) r.fail("window store declares an empty window shape");
  const std::uint64_t per_window = 13 + 4 * set.stride();
  if (count > r.remaining() / per_window) r.fail("truncated, header declares " + std::to_string(count) + " windows");
  set.data.reserve(count * set.stride());
  for (std::uint64_t i = 0; i < count; ++i) {
    set.labels.push_back(r.get<std::uint8_t>());
    const int p = r.get<std::uint16_t>();
    const int s = r.get<std::uint16_t>();
    set.keys.push_back({p, s});
    set.onsets.push_back(r.get<double>());
    for (std::size_t k = 0; k < set.stride(); ++k) set.data.push_back(r.get<float>());
  }
  return set;
}

// ---------------------------------------------------------------------------
// Splits

std::string_view split_name(SplitMethod m) {
  switch (m) {
    case SplitMethod::kPerSubject: return "PS";
    case SplitMethod::kLoso: return "LOSO";
    case SplitMethod::kAos: return "AOS";
    case SplitMethod::kPooledSessions: return "POOLED";
  }
  return "PS";
}

std::optional<SplitMethod> parse_split(std::string_view name) {
  for (auto m : {SplitMethod::kPerSubject, SplitMethod::kLoso, SplitMethod::kAos, SplitMethod::kPooledSessions}) {
    if (split_name(m) == name) return m;
  }
  return std::nullopt;
}

namespace {

using SessionsByParticipant = std::map<int, std::vector<int>>;

SessionsByParticipant group(std::span<const SessionKey> keys) {
  SessionsByParticipant g;
  for (const auto& k : keys) g[k.participant].push_back(k.session);
  for (auto& [p, s] : g) {
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
      throw ConfigError("duplicate session key for participant " + std::to_string(p));
    }
  }
  return g;
}

std::size_t fold_count(std::size_t sessions, const SplitParams& params, int participant) {
  std::size_t folds = params.folds;
  if (folds == 0) {
    if (params.test_sessions == 0 || sessions % params.test_sessions != 0) {
      throw ConfigError("participant " + std::to_string(participant) + " has " + std::to_string(sessions) +
                        " sessions, not divisible into folds of " + std::to_string(params.test_sessions));
    }
    folds = sessions / params.test_sessions;
  }
  if (folds < 2 || sessions % folds != 0) {
    throw ConfigError("participant " + std::to_string(participant) + " has " + std::to_string(sessions) +
                      " sessions, not divisible into " + std::to_string(folds) + " folds");
  }
  return folds;
}

}  // namespace

SplitPlan make_splits(std::span<const SessionKey> keys, SplitMethod method, const SplitParams& params) {
  const auto by_p = group(keys);
  if (by_p.empty()) throw ConfigError("cannot split an empty dataset");
  SplitPlan plan{method, {}};

  auto all_of_others = [&](int held_out) {
    std::vector<SessionKey> out;
    for (const auto& [p, sessions] : by_p) {
      if (p == held_out) continue;
      for (int s : sessions) out.push_back({p, s});
    }
    return out;
  };

  switch (method) {
    case SplitMethod::kPerSubject:
      for (const auto& [p, sessions] : by_p) {
        const std::size_t folds = fold_count(sessions.size(), params, p);
        const std::size_t per = sessions.size() / folds;
        for (std::size_t f = 0; f < folds; ++f) {
          Fold fold;
          fold.participant = p;
          for (std::size_t i = 0; i < sessions.size(); ++i) {
            (i / per == f ? fold.test : fold.train).push_back({p, sessions[i]});
          }
          plan.folds.push_back(std::move(fold));
        }
      }
      break;
    case SplitMethod::kLoso:
      if (by_p.size() < 2) throw ConfigError("LOSO needs at least two participants");
      for (const auto& [p, sessions] : by_p) {
        Fold fold;
        fold.participant = p;
        fold.train = all_of_others(p);
        for (int s : sessions) fold.test.push_back({p, s});
        plan.folds.push_back(std::move(fold));
      }
      break;
    case SplitMethod::kAos:
      if (by_p.size() < 2) throw ConfigError("AOS needs at least two participants");
      for (const auto& [p, sessions] : by_p) {
        if (sessions.size() < 2) {
          throw ConfigError("AOS needs at least two sessions for participant " + std::to_string(p));
        }
        Fold fold;
        fold.participant = p;
        fold.train = all_of_others(p);
        fold.train.push_back({p, sessions.front()});  // calibration session
        std::sort(fold.train.begin(), fold.train.end());
        for (std::size_t i = 1; i < sessions.size(); ++i) fold.test.push_back({p, sessions[i]});
        plan.folds.push_back(std::move(fold));
      }
      break;
    case SplitMethod::kPooledSessions: {
      std::size_t folds = 0;
      for (const auto& [p, sessions] : by_p) {
        const std::size_t f = fold_count(sessions.size(), params, p);
        if (folds != 0 && f != folds) throw ConfigError("participants differ in session-fold count");
        folds = f;
      }
      for (std::size_t f = 0; f < folds; ++f) {
        Fold fold;
        for (const auto& [p, sessions] : by_p) {
          const std::size_t per = sessions.size() / folds;
          for (std::size_t i = 0; i < sessions.size(); ++i) {
            (i / per == f ? fold.test : fold.train).push_back({p, sessions[i]});
          }
        }
        plan.folds.push_back(std::move(fold));
      }
      break;
    }
  }
  return plan;
}

std::string split_plan_json(const SplitPlan& plan) {
  auto keys_json = [](const std::vector<SessionKey>& keys) {
    json a = json::array();
    for (const auto& k : keys) a.push_back({k.participant, k.session});
    return a;
  };
  json folds = json::array();
  for (const auto& f : plan.folds) {
    folds.push_back({{"participant", f.participant}, {"train", keys_json(f.train)}, {"test", keys_json(f.test)}});
  }
  return json{{"method", split_name(plan.method)}, {"folds", std::move(folds)}}.dump(2);
}

}  // namespace surfgest
