#include "vnav/place_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vnav/error.hpp"

namespace vnav {

std::string FrameId::str() const { return std::to_string(trajectory) + ":" + std::to_string(index); }

FrameId FrameId::parse(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == s.size()) {
    throw Error(ErrorCode::InvalidSpec, "frame id must look like traj:index, got '" + s + "'");
  }
  try {
    std::size_t used_a = 0, used_b = 0;
    const auto a = std::stoul(s.substr(0, colon), &used_a);
    const auto b = std::stoul(s.substr(colon + 1), &used_b);
    if (used_a != colon || used_b != s.size() - colon - 1) throw std::invalid_argument(s);
    return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::InvalidSpec, "frame id must look like traj:index, got '" + s + "'");
  }
}

GlobalDescriptor describe_frame(const FrameObservation& obs) {
  if (obs.empty()) throw Error(ErrorCode::EmptyFrame, "observation has no detections");
  const std::size_t dim = obs.detections.front().descriptor.size();
  std::vector<double> acc(dim, 0.0);
  for (const auto& d : obs.detections) {
    if (d.descriptor.size() != dim) throw Error(ErrorCode::DimensionMismatch, "mixed descriptor sizes");
    for (std::size_t i = 0; i < dim; ++i) acc[i] += d.descriptor[i];
  }
  double n2 = 0.0;
  for (double v : acc) n2 += v * v;
  GlobalDescriptor g;
  g.values.resize(dim);
  const double inv = n2 > 0.0 ? 1.0 / std::sqrt(n2) : 0.0;
  for (std::size_t i = 0; i < dim; ++i) g.values[i] = static_cast<float>(acc[i] * inv);
  return g;
}

double similarity(const GlobalDescriptor& a, const GlobalDescriptor& b) { return dot(a.values, b.values); }

DescriptorIndex::DescriptorIndex(std::vector<Entry> entries) : entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (i == 0) dim_ = e.descriptor.dim();
    if (e.descriptor.dim() != dim_) throw Error(ErrorCode::DimensionMismatch, "index descriptors differ in size");
    if (!by_id_.emplace(e.frame, i).second) {
      throw Error(ErrorCode::InconsistentGraph, "duplicate frame id " + e.frame.str() + " in index");
    }
  }
}

const GlobalDescriptor* DescriptorIndex::find(const FrameId& id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &entries_[it->second].descriptor;
}

std::vector<Neighbor> DescriptorIndex::knn(const GlobalDescriptor& q, std::size_t k,
                                           const std::function<bool(const FrameId&)>& keep) const {
  if (!entries_.empty() && q.dim() != dim_) {
    throw Error(ErrorCode::DimensionMismatch,
                "query has dimension " + std::to_string(q.dim()) + ", index " + std::to_string(dim_));
  }
  std::vector<Neighbor> all;
  all.reserve(entries_.size());
  for (const auto& e : entries_) {
    if (keep && !keep(e.frame)) continue;
    all.push_back({e.frame, similarity(q, e.descriptor)});
  }
  const auto better = [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.frame < b.frame;
  };
  k = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

std::vector<Neighbor> knn_query(const DescriptorIndex& index, const GlobalDescriptor& q, std::size_t k) {
  if (index.empty()) throw Error(ErrorCode::InvalidSession, "knn query on an empty index");
  return index.knn(q, k);
}

RecallReport evaluate_recall(const DescriptorIndex& db, const std::vector<DescriptorIndex::Entry>& queries,
                             const std::unordered_map<FrameId, Vec2>& positions,
                             const RecallProtocol& protocol) {
  const auto pos = [&](const FrameId& f) -> const Vec2& {
    const auto it = positions.find(f);
    if (it == positions.end()) throw Error(ErrorCode::InvalidSpec, "frame " + f.str() + " has no position");
    return it->second;
  };

  std::vector<DescriptorIndex::Entry> ordered = db.entries();
  std::sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.frame < b.frame; });
  std::vector<Vec2> centers;
  for (const auto& e : ordered) {
    const Vec2& p = pos(e.frame);
    bool covered = false;
    for (const auto& c : centers) {
      if ((p - c).norm() <= protocol.db_radius) {
        covered = true;
        break;
      }
    }
    if (!covered) centers.push_back(p);
  }

  std::size_t max_k = 0;
  for (auto k : protocol.ks) max_k = std::max(max_k, k);

  RecallReport report;
  report.database_count = db.size();
  report.region_count = centers.size();
  std::map<std::size_t, std::size_t> hits;
  for (auto k : protocol.ks) hits[k] = 0;

  for (const auto& q : queries) {
    const Vec2& qp = pos(q.frame);
    double nearest = std::numeric_limits<double>::infinity();
    for (const auto& c : centers) nearest = std::min(nearest, (qp - c).norm());
    if (!(nearest > protocol.db_radius && nearest <= protocol.db_radius + protocol.band)) continue;
    ++report.query_count;
    const auto ranked = db.knn(q.descriptor, max_k);
    std::size_t first_correct = ranked.size();
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if ((pos(ranked[r].frame) - qp).norm() <= protocol.same_place_radius) {
        first_correct = r;
        break;
      }
    }
    for (auto k : protocol.ks) {
      if (first_correct < k) ++hits[k];
    }
  }
  if (report.query_count == 0) throw Error(ErrorCode::EmptyProtocol, "no query lies in the band around the database regions");
  for (const auto& [k, h] : hits) report.recall_at[k] = 100.0 * double(h) / double(report.query_count);
  return report;
}

}  // namespace vnav
