#include "surfgest/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "surfgest/error.hpp"

namespace surfgest {

using nlohmann::json;

std::vector<double> EventAnnotation::timestamps() const {
  std::vector<double> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back(e.t_sec);
  return out;
}

bool EventAnnotation::strictly_increasing() const {
  for (std::size_t i = 1; i < events.size(); ++i) {
    if (!(events[i].t_sec > events[i - 1].t_sec)) return false;
  }
  return true;
}

double EventAnnotation::min_gap_sec() const {
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < events.size(); ++i) gap = std::min(gap, events[i].t_sec - events[i - 1].t_sec);
  return gap;
}

namespace {

std::string_view source_name(AnnotationSource s) {
  switch (s) {
    case AnnotationSource::kAutomatic: return "automatic";
    case AnnotationSource::kManuallyCorrected: return "manually-corrected";
    case AnnotationSource::kGroundTruth: return "ground-truth";
  }
  return "automatic";
}

AnnotationSource parse_source(const std::string& s, const std::filesystem::path& path) {
  if (s == "automatic") return AnnotationSource::kAutomatic;
  if (s == "manually-corrected") return AnnotationSource::kManuallyCorrected;
  if (s == "ground-truth") return AnnotationSource::kGroundTruth;
  throw ConfigError(path.string() + ": unknown annotation source \"" + s + "\"");
}

json label_json(const std::optional<GestureClass>& label) {
  return label ? json(std::string(gesture_name(*label))) : json(nullptr);
}

std::optional<GestureClass> parse_label(const json& j, const std::filesystem::path& path) {
  if (j.is_null()) return std::nullopt;
  const auto g = parse_gesture(j.get<std::string>());
  if (!g) throw ConfigError(path.string() + ": unknown gesture label " + j.dump());
  return g;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void save_annotation(const std::filesystem::path& path, const EventAnnotation& ann) {
  json events = json::array();
  for (const auto& e : ann.events) {
    events.push_back({{"t_sec", e.t_sec}, {"label", label_json(e.label)}, {"source", source_name(e.source)}});
  }
  write_json(path, {{"recording_id", ann.recording_id},
                    {"sample_rate_hz", ann.sample_rate_hz},
                    {"events", std::move(events)}});
}

EventAnnotation load_annotation(const std::filesystem::path& path) {
  const json j = read_json(path);
  EventAnnotation ann;
  try {
    ann.recording_id = j.at("recording_id").get<std::string>();
    ann.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    for (const auto& e : j.at("events")) {
      ann.events.push_back({e.at("t_sec").get<double>(), parse_label(e.at("label"), path),
                            parse_source(e.at("source").get<std::string>(), path)});
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!ann.strictly_increasing()) throw ConfigError(path.string() + ": event timestamps not strictly increasing");
  return ann;
}

CorrectionManifest load_corrections(const std::filesystem::path& path) {
  const json j = read_json(path);
  CorrectionManifest m;
  try {
    m.recording_id = j.at("recording_id").get<std::string>();
    for (const auto& e : j.at("events")) {
      Correction c;
      const auto action = e.at("action").get<std::string>();
      if (action == "add") {
        c.action = Correction::Action::kAdd;
      } else if (action == "remove") {
        c.action = Correction::Action::kRemove;
      } else {
        throw ConfigError(path.string() + ": unknown correction action \"" + action + "\"");
      }
      c.t_sec = e.at("t_sec").get<double>();
      if (e.contains("label")) c.label = parse_label(e.at("label"), path);
      m.corrections.push_back(c);
    }
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return m;
}

void save_corrections(const std::filesystem::path& path, const CorrectionManifest& manifest) {
  json events = json::array();
  for (const auto& c : manifest.corrections) {
    events.push_back({{"action", c.action == Correction::Action::kAdd ? "add" : "remove"},
                      {"t_sec", c.t_sec},
                      {"label", label_json(c.label)},
                      {"source", "manually-corrected"}});
  }
  write_json(path, {{"recording_id", manifest.recording_id}, {"events", std::move(events)}});
}

EventAnnotation apply_corrections(const EventAnnotation& ann, const CorrectionManifest& manifest,
                                  double min_gap_sec, double match_tolerance_sec) {
  EventAnnotation out = ann;
  for (const auto& c : manifest.corrections) {
    if (c.action != Correction::Action::kRemove) continue;
    auto it = std::min_element(out.events.begin(), out.events.end(), [&](const auto& a, const auto& b) {
      return std::abs(a.t_sec - c.t_sec) < std::abs(b.t_sec - c.t_sec);
    });
    if (it == out.events.end() || std::abs(it->t_sec - c.t_sec) > match_tolerance_sec) {
      throw ConfigError(ann.recording_id + ": no event near " + std::to_string(c.t_sec) + " s to remove");
    }
    out.events.erase(it);
  }
  for (const auto& c : manifest.corrections) {
    if (c.action != Correction::Action::kAdd) continue;
    AnnotatedEvent e{c.t_sec, c.label, AnnotationSource::kManuallyCorrected};
    auto pos = std::lower_bound(out.events.begin(), out.events.end(), e.t_sec,
                                [](const AnnotatedEvent& a, double t) { return a.t_sec < t; });
    const bool clash_next = pos != out.events.end() && pos->t_sec - e.t_sec < min_gap_sec;
    const bool clash_prev = pos != out.events.begin() && e.t_sec - std::prev(pos)->t_sec < min_gap_sec;
    if (clash_next || clash_prev) {
      throw ConfigError(ann.recording_id + ": added onset " + std::to_string(c.t_sec) +
                        " s violates the minimum gap of " + std::to_string(min_gap_sec) + " s");
    }
    out.events.insert(pos, e);
  }
  return out;
}

EventAnnotation assign_labels(const EventAnnotation& detected, const EventAnnotation& reference,
                              double tolerance_sec) {
  EventAnnotation out = detected;
  for (auto& e : out.events) {
    e.label.reset();
    const AnnotatedEvent* best = nullptr;
    for (const auto& r : reference.events) {
      if (std::abs(r.t_sec - e.t_sec) <= tolerance_sec &&
          (best == nullptr || std::abs(r.t_sec - e.t_sec) < std::abs(best->t_sec - e.t_sec))) {
        best = &r;
      }
    }
    if (best != nullptr) e.label = best->label;
  }
  return out;
}

}  // namespace surfgest
