#pragma once

#include <cstdint>
#include <vector>

#include "vnav/geom.hpp"

namespace vnav {

/// Appearance descriptor of a local feature; unit norm.
using Descriptor = std::vector<float>;

inline constexpr std::size_t kDescriptorDim = 64;
inline constexpr std::int64_t kSpuriousLandmark = -1;

struct Detection {
  PixelPoint pixel;
  double depth = 0.0;  // along the camera forward axis
  Descriptor descriptor;
  bool is_ground = false;
  std::int64_t landmark_id = kSpuriousLandmark;  // evaluation only
};

/// What the camera sees at one instant.
struct FrameObservation {
  std::vector<Detection> detections;

  bool empty() const { return detections.empty(); }
  std::size_t size() const { return detections.size(); }
};

void normalize(Descriptor& d);
double dot(const Descriptor& a, const Descriptor& b);

/// Stable 64-bit digest of every numeric field of an observation.
std::uint64_t digest(const FrameObservation& obs);

}  // namespace vnav
