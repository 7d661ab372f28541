#include "surfgest/recording.hpp"

#include <cmath>
#include <limits>

#include "binary_io.hpp"
#include "surfgest/error.hpp"

namespace surfgest {

namespace {

template <typename U>
U checked_narrow(long long v, const char* what) {
  if (v < 0 || static_cast<unsigned long long>(v) > std::numeric_limits<U>::max()) {
    throw InvalidArgumentError(std::string(what) + " out of range for recording header");
  }
  return static_cast<U>(v);
}

}  // namespace

void store_recording(const std::filesystem::path& path, const Recording& rec) {
  if (rec.samples.empty()) throw InvalidArgumentError("cannot store an empty recording");
  const double rate = rec.sample_rate_hz;
  if (!(rate > 0.0) || std::floor(rate) != rate || rate > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidArgumentError("recording sample rate must be a positive integer in Hz");
  }
  detail::ByteWriter w;
  w.magic("VIBR");
  w.put<std::uint16_t>(kRecordingFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rate));
  w.put<std::uint16_t>(checked_narrow<std::uint16_t>(static_cast<long long>(rec.samples.channels), "channels"));
  w.put<std::uint64_t>(rec.samples.length);
  w.put<std::uint16_t>(checked_narrow<std::uint16_t>(rec.participant_id, "participant id"));
  w.put<std::uint16_t>(checked_narrow<std::uint16_t>(rec.session_id, "session id"));
  for (std::size_t t = 0; t < rec.samples.length; ++t) {
    for (std::size_t c = 0; c < rec.samples.channels; ++c) w.put<float>(rec.samples.at(c, t));
  }
  w.save(path);
}

Recording load_recording(const std::filesystem::path& path) {
  auto r = detail::ByteReader::from_file(path);
  r.expect_magic("VIBR");
  const auto version = r.get<std::uint16_t>();
  if (version != kRecordingFormatVersion) r.fail("unsupported version " + std::to_string(version), 4);

  Recording rec;
  rec.sample_rate_hz = r.get<std::uint32_t>();
  if (rec.sample_rate_hz <= 0.0) r.fail("zero sample rate", 6);
  const auto channels = r.get<std::uint16_t>();
  if (channels == 0) r.fail("header declares zero channels", 10);
  const auto length = r.get<std::uint64_t>();
  if (length == 0) r.fail("header declares zero samples", 12);
  rec.participant_id = r.get<std::uint16_t>();
  rec.session_id = r.get<std::uint16_t>();

  if (length > r.remaining() / 4 / channels) {
    r.fail("truncated payload, header declares " + std::to_string(length) + " samples x " +
               std::to_string(channels) + " channels",
           kRecordingHeaderBytes + r.remaining());
  }
  rec.samples = SampleBlock(channels, length);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t c = 0; c < channels; ++c) rec.samples.at(c, t) = r.get<float>();
  }
  return rec;
}

}  // namespace surfgest
