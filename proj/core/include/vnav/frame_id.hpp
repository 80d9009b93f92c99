#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

namespace vnav {

/// Global frame identifier: (trajectory, index within trajectory). Ordered
/// lexicographically; printed as "traj:index".
struct FrameId {
  std::uint32_t trajectory = 0;
  std::uint32_t index = 0;

  auto operator<=>(const FrameId&) const = default;

  std::string str() const;
  /// Parses "traj:index"; throws InvalidSpec on malformed input.
  static FrameId parse(const std::string& s);
};

}  // namespace vnav

template <>
struct std::hash<vnav::FrameId> {
  std::size_t operator()(const vnav::FrameId& f) const noexcept {
    return std::hash<std::uint64_t>{}((std::uint64_t(f.trajectory) << 32) | f.index);
  }
};
