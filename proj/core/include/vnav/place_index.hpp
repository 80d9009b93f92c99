#pragma once

#include <functional>
#include <map>
#include <unordered_map>
#include <vector>

#include "vnav/frame_id.hpp"
#include "vnav/geom.hpp"
#include "vnav/observation.hpp"

namespace vnav {

/// Frame-level appearance summary; unit L2 norm.
struct GlobalDescriptor {
  std::vector<float> values;

  std::size_t dim() const { return values.size(); }
};

/// Mean-pools the detection descriptors and L2-normalizes.
/// Throws EmptyFrame for an observation without detections.
GlobalDescriptor describe_frame(const FrameObservation& obs);

double similarity(const GlobalDescriptor& a, const GlobalDescriptor& b);

struct Neighbor {
  FrameId frame;
  double similarity = 0.0;
};

/// Exact inner-product index. Immutable once built; queries are const and
/// may run concurrently.
class DescriptorIndex {
 public:
  struct Entry {
    FrameId frame;
    GlobalDescriptor descriptor;
  };

  DescriptorIndex() = default;
  /// Throws DimensionMismatch on mixed dimensions and InconsistentGraph on
  /// duplicate frame ids.
  explicit DescriptorIndex(std::vector<Entry> entries);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return dim_; }
  const std::vector<Entry>& entries() const { return entries_; }
  const GlobalDescriptor* find(const FrameId& id) const;

  /// Exact top-k by similarity; ties go to the lower frame id. Returns the
  /// whole index when k exceeds its size. `keep` filters candidates.
  std::vector<Neighbor> knn(const GlobalDescriptor& q, std::size_t k,
                            const std::function<bool(const FrameId&)>& keep = {}) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<FrameId, std::size_t> by_id_;
  std::size_t dim_ = 0;
};

/// Throws InvalidSession on an empty index, DimensionMismatch on a query of
/// the wrong dimension.
std::vector<Neighbor> knn_query(const DescriptorIndex& index, const GlobalDescriptor& q, std::size_t k);

struct RecallProtocol {
  double same_place_radius = 1.0;
  double db_radius = 0.5;
  double band = 0.5;
  std::vector<std::size_t> ks{1, 5, 10, 15};
};

struct RecallReport {
  std::map<std::size_t, double> recall_at;  // k -> percent
  std::size_t query_count = 0;
  std::size_t database_count = 0;
  std::size_t region_count = 0;
};

/// Retrieval evaluation with database regions and an outer query band:
///  * database frames are grouped greedily (in frame order) into regions of
///    radius db_radius around each region's first frame;
///  * a query is kept when its distance to the nearest region center lies in
///    (db_radius, db_radius + band];
///  * a retrieval is correct when it lies within same_place_radius of the
///    query's true position, and recall@k is the percentage of kept queries
///    with at least one correct retrieval in the top k.
/// Throws EmptyProtocol when no query survives the band filter.
RecallReport evaluate_recall(const DescriptorIndex& db, const std::vector<DescriptorIndex::Entry>& queries,
                             const std::unordered_map<FrameId, Vec2>& positions,
                             const RecallProtocol& protocol = {});

}  // namespace vnav
