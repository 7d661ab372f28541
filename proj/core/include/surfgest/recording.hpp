#pragma once

#include <cstdint>
#include <filesystem>

#include "surfgest/types.hpp"

namespace surfgest {

// One continuous multi-channel session, samples in volts.
struct Recording {
  int participant_id = 0;
  int session_id = 0;
  double sample_rate_hz = 1000.0;
  SampleBlock samples;

  SessionKey key() const { return {participant_id, session_id}; }
  double duration_sec() const { return static_cast<double>(samples.length) / sample_rate_hz; }

  bool operator==(const Recording&) const = default;
};

// On-disk layout, little-endian:
//
//   offset  size  field
//   0       4     magic "VIBR"
//   4       2     version (1)
//   6       4     sample rate, integer Hz
//   10      2     channels
//   12      8     samples per channel
//   20      2     participant id
//   22      2     session id
//   24      ...   float32 payload, channel-interleaved (t0c0 t0c1 ... t1c0 ...)
inline constexpr std::uint16_t kRecordingFormatVersion = 1;
inline constexpr std::size_t kRecordingHeaderBytes = 24;

// Throws IoError if the file cannot be written.
void store_recording(const std::filesystem::path& path, const Recording& rec);

// Throws IoError if unreadable, FormatError (with byte offset) on bad magic,
// unknown version, zero channels/samples, or truncation.
Recording load_recording(const std::filesystem::path& path);

}  // namespace surfgest
