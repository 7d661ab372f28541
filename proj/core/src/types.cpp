#include "surfgest/types.hpp"

#include <algorithm>

#include "surfgest/error.hpp"

namespace surfgest {

SampleBlock SampleBlock::slice(std::size_t start, std::size_t count) const {
  if (start + count > length) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") exceeds block length " + std::to_string(length));
  }
  SampleBlock out(channels, count);
  for (std::size_t c = 0; c < channels; ++c) {
    auto src = channel(c).subspan(start, count);
    std::copy(src.begin(), src.end(), out.channel(c).begin());
  }
  return out;
}

SampleBlock block_from_rows(const std::vector<std::vector<float>>& rows) {
  if (rows.empty()) return {};
  SampleBlock out(rows.size(), rows.front().size());
  for (std::size_t c = 0; c < rows.size(); ++c) {
    if (rows[c].size() != out.length) throw ShapeError("ragged rows in block_from_rows");
    std::copy(rows[c].begin(), rows[c].end(), out.channel(c).begin());
  }
  return out;
}

namespace {
constexpr std::array<std::string_view, kNumGestureClasses> kNames = {
    "swipe-left", "swipe-right", "swipe-up", "swipe-down", "tap", "knock"};
}

std::string_view gesture_name(GestureClass g) { return kNames[static_cast<std::size_t>(g)]; }

std::optional<GestureClass> parse_gesture(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<GestureClass>(i);
  }
  return std::nullopt;
}

bool is_swipe(GestureClass g) { return static_cast<std::size_t>(g) < kNumSwipeClasses; }

}  // namespace surfgest
