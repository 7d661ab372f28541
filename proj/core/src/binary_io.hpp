#pragma once

// Little-endian byte buffers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "surfgest/error.hpp"

namespace surfgest::detail {

class ByteWriter {
 public:
  void magic(const char (&m)[5]) { buf_.insert(buf_.end(), m, m + 4); }

  template <typename U>
  void put(U value) {
    if constexpr (std::is_floating_point_v<U>) {
      using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
      put<Bits>(std::bit_cast<Bits>(value));
    } else {
      for (std::size_t i = 0; i < sizeof(U); ++i) {
        buf_.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFFu));
      }
    }
  }

  const std::vector<char>& bytes() const { return buf_; }

  // Writes to a sibling temp file and renames, so a crash never leaves a
  // half-written file under the final name.
  void save(const std::filesystem::path& path) const {
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
      out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
      if (!out) throw IoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

 private:
  std::vector<char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> bytes, std::string name)
      : buf_(std::move(bytes)), name_(std::move(name)) {}

  static ByteReader from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return ByteReader(std::move(bytes), path.string());
  }

  void expect_magic(const char (&m)[5]) {
    if (buf_.size() < 4 || std::memcmp(buf_.data(), m, 4) != 0) {
      fail(std::string("bad magic, expected \"") + m + "\"");
    }
    pos_ = 4;
  }

  template <typename U>
  U get() {
    if constexpr (std::is_floating_point_v<U>) {
      using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
      return std::bit_cast<U>(get<Bits>());
    } else {
      need(sizeof(U));
      std::uint64_t v = 0;
      for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
      pos_ += sizeof(U);
      return static_cast<U>(v);
    }
  }

  void need(std::uint64_t n) const {
    if (n > buf_.size() - pos_) fail("truncated, needed " + std::to_string(n) + " more bytes", buf_.size());
  }

  [[noreturn]] void fail(const std::string& what) const { fail(what, pos_); }
  [[noreturn]] void fail(const std::string& what, std::uint64_t offset) const {
    throw FormatError(name_ + ": " + what, offset);
  }

  std::uint64_t offset() const noexcept { return pos_; }
  std::uint64_t remaining() const noexcept { return buf_.size() - pos_; }

 private:
  std::vector<unsigned char> buf_;
  std::string name_;
  std::uint64_t pos_ = 0;
};

}  // namespace surfgest::detail
