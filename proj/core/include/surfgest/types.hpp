#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace surfgest {

// Multi-channel block of samples stored channel-major: sample t of channel c
// lives at data[c * length + t].
struct SampleBlock {
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<float> data;

  SampleBlock() = default;
  SampleBlock(std::size_t n_channels, std::size_t n_samples)
      : channels(n_channels), length(n_samples), data(n_channels * n_samples, 0.0f) {}

  bool empty() const noexcept { return channels == 0 || length == 0; }

  std::span<float> channel(std::size_t c) { return {data.data() + c * length, length}; }
  std::span<const float> channel(std::size_t c) const {
    return {data.data() + c * length, length};
  }

  float& at(std::size_t c, std::size_t t) { return data[c * length + t]; }
  float at(std::size_t c, std::size_t t) const { return data[c * length + t]; }

  // Copy of samples [start, start + count) of every channel.
  SampleBlock slice(std::size_t start, std::size_t count) const;

  bool operator==(const SampleBlock&) const = default;
};

// Build a block from per-channel rows. All rows must have equal length.
SampleBlock block_from_rows(const std::vector<std::vector<float>>& rows);

enum class GestureClass : std::uint8_t {
  kSwipeLeft = 0,
  kSwipeRight = 1,
  kSwipeUp = 2,
  kSwipeDown = 3,
  kTap = 4,
  kKnock = 5,
};

inline constexpr std::size_t kNumGestureClasses = 6;
// The swipe subset occupies labels 0..3 so 4-class mode needs no remapping.
inline constexpr std::size_t kNumSwipeClasses = 4;

inline constexpr std::array<GestureClass, kNumGestureClasses> kAllGestures = {
    GestureClass::kSwipeLeft, GestureClass::kSwipeRight, GestureClass::kSwipeUp,
    GestureClass::kSwipeDown, GestureClass::kTap,        GestureClass::kKnock};

std::string_view gesture_name(GestureClass g);
std::optional<GestureClass> parse_gesture(std::string_view name);
bool is_swipe(GestureClass g);

// Identifies one recording session of one participant.
struct SessionKey {
  int participant = 0;
  int session = 0;

  auto operator<=>(const SessionKey&) const = default;
};

}  // namespace surfgest
