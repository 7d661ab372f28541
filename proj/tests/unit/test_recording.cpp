#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "surfgest/error.hpp"
#include "surfgest/recording.hpp"
#include "test_util.hpp"

namespace surfgest {
namespace {

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Recording sample_recording() { return {3, 7, 1000.0, testing::random_block(4, 2000, 21)}; }

TEST(RecordingFile, RoundTripIsExact) {
  testing::TempDir dir;
  const auto rec = sample_recording();
  store_recording(dir / "r.vibr", rec);
  EXPECT_EQ(load_recording(dir / "r.vibr"), rec);
  EXPECT_EQ(std::filesystem::file_size(dir / "r.vibr"), kRecordingHeaderBytes + 4u * 2000u * 4u);
}

TEST(RecordingFile, HeaderLayout) {
  testing::TempDir dir;
  store_recording(dir / "r.vibr", sample_recording());
  const auto b = read_bytes(dir / "r.vibr");
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "VIBR");
  auto u16 = [&](std::size_t o) { return static_cast<unsigned>(static_cast<unsigned char>(b[o])) |
                                         static_cast<unsigned>(static_cast<unsigned char>(b[o + 1])) << 8; };
  EXPECT_EQ(u16(4), 1u);
  EXPECT_EQ(u16(6), 1000u);
  EXPECT_EQ(u16(10), 4u);
  EXPECT_EQ(u16(12), 2000u);
  EXPECT_EQ(u16(20), 3u);
  EXPECT_EQ(u16(22), 7u);
  // Payload is channel-interleaved: second float is channel 1 at t=0.
  const auto rec = sample_recording();
  float second;
  std::memcpy(&second, b.data() + kRecordingHeaderBytes + 4, 4);
  EXPECT_EQ(second, rec.samples.at(1, 0));
}

TEST(RecordingFile, TruncatedPayloadIsFormatError) {
  testing::TempDir dir;
  store_recording(dir / "r.vibr", sample_recording());
  auto b = read_bytes(dir / "r.vibr");
  b.resize(b.size() - 10);
  write_bytes(dir / "t.vibr", b);
  EXPECT_THROW(load_recording(dir / "t.vibr"), FormatError);
}

TEST(RecordingFile, ZeroChannelsIsFormatErrorWithOffset) {
  testing::TempDir dir;
  store_recording(dir / "r.vibr", sample_recording());
  auto b = read_bytes(dir / "r.vibr");
  b[10] = 0;
  b[11] = 0;
  write_bytes(dir / "z.vibr", b);
  try {
    load_recording(dir / "z.vibr");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 10u);
  }
}

TEST(RecordingFile, BadMagicAndVersion) {
  testing::TempDir dir;
  store_recording(dir / "r.vibr", sample_recording());
  auto b = read_bytes(dir / "r.vibr");
  auto magic = b;
  magic[0] = 'X';
  write_bytes(dir / "m.vibr", magic);
  EXPECT_THROW(load_recording(dir / "m.vibr"), FormatError);
  auto version = b;
  version[4] = 9;
  write_bytes(dir / "v.vibr", version);
  EXPECT_THROW(load_recording(dir / "v.vibr"), FormatError);
  EXPECT_THROW(load_recording(dir / "absent.vibr"), IoError);
}

TEST(RecordingFile, StoreRejectsUnrepresentableRecordings) {
  testing::TempDir dir;
  auto rec = sample_recording();
  rec.sample_rate_hz = 999.5;
  EXPECT_THROW(store_recording(dir / "a.vibr", rec), InvalidArgumentError);
  EXPECT_THROW(store_recording(dir / "b.vibr", Recording{}), InvalidArgumentError);
}

}  // namespace
}  // namespace surfgest
