#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace refineloc {

inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kForeground = 1;

/// Snippet-level background/foreground supervision for one video. Only
/// snippets with sample_mask[t] == 1 contribute to the pseudo loss.
struct PseudoLabels {
  std::string video_id;
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> sample_mask;

  bool operator==(const PseudoLabels&) const = default;
};

}  // namespace refineloc
