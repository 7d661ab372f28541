#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "surfgest/types.hpp"

namespace surfgest {

enum class AnnotationSource { kAutomatic, kManuallyCorrected, kGroundTruth };

struct AnnotatedEvent {
  double t_sec = 0.0;
  std::optional<GestureClass> label;
  AnnotationSource source = AnnotationSource::kAutomatic;

  bool operator==(const AnnotatedEvent&) const = default;
};

// Time-sorted gesture onsets of one recording.
struct EventAnnotation {
  std::string recording_id;
  double sample_rate_hz = 1000.0;
  std::vector<AnnotatedEvent> events;

  std::vector<double> timestamps() const;
  bool strictly_increasing() const;
  // Smallest gap between consecutive onsets, +inf with fewer than two events.
  double min_gap_sec() const;

  bool operator==(const EventAnnotation&) const = default;
};

// Manifest JSON: {"recording_id", "sample_rate_hz", "events": [{"t_sec", "label", "source"}]}
// with label null when unknown.
void save_annotation(const std::filesystem::path& path, const EventAnnotation& ann);
EventAnnotation load_annotation(const std::filesystem::path& path);

// A correction manifest has the annotation shape plus an "action" of "add" or
// "remove" on every event.
struct Correction {
  enum class Action { kAdd, kRemove };
  Action action = Action::kAdd;
  double t_sec = 0.0;
  std::optional<GestureClass> label;
};

struct CorrectionManifest {
  std::string recording_id;
  std::vector<Correction> corrections;
};

CorrectionManifest load_corrections(const std::filesystem::path& path);
void save_corrections(const std::filesystem::path& path, const CorrectionManifest& manifest);

// Removes then adds. A remove must match an existing onset within
// match_tolerance_sec; an added onset closer than min_gap_sec to a neighbour is
// rejected. Both cases throw ConfigError. Added events are marked manual.
EventAnnotation apply_corrections(const EventAnnotation& ann, const CorrectionManifest& manifest,
                                  double min_gap_sec, double match_tolerance_sec = 0.005);

// Copies labels from a reference (protocol / ground-truth) annotation onto the
// nearest detected onset within tolerance_sec. Unmatched events keep no label.
EventAnnotation assign_labels(const EventAnnotation& detected, const EventAnnotation& reference,
                              double tolerance_sec);

}  // namespace surfgest
