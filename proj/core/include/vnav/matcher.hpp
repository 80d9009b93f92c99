#pragma once

#include <vector>

#include "vnav/observation.hpp"

namespace vnav {

struct MatcherConfig {
  /// Maximum Euclidean distance between unit descriptors for a match.
  double max_descriptor_distance = 0.7;
};

struct DescriptorMatch {
  std::size_t query = 0;   // index into the first observation
  std::size_t train = 0;   // index into the second observation
  double distance = 0.0;
};

/// Mutual nearest neighbours under Euclidean descriptor distance, gated by
/// cfg.max_descriptor_distance. Ordered by query index.
std::vector<DescriptorMatch> match_mutual_nn(const FrameObservation& query, const FrameObservation& train,
                                             const MatcherConfig& cfg = {});

}  // namespace vnav
