#include "vnav/matcher.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Core>

namespace vnav {
namespace {

Eigen::MatrixXf stack(const FrameObservation& obs, std::size_t dim) {
  Eigen::MatrixXf m(static_cast<Eigen::Index>(obs.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const auto& d = obs.detections[i].descriptor;
    for (std::size_t j = 0; j < dim; ++j) m(Eigen::Index(i), Eigen::Index(j)) = j < d.size() ? d[j] : 0.0f;
  }
  return m;
}

}  // namespace

std::vector<DescriptorMatch> match_mutual_nn(const FrameObservation& query, const FrameObservation& train,
                                             const MatcherConfig& cfg) {
  std::vector<DescriptorMatch> out;
  if (query.empty() || train.empty()) return out;
  const std::size_t dim = query.detections.front().descriptor.size();
  const Eigen::MatrixXf q = stack(query, dim);
  const Eigen::MatrixXf t = stack(train, dim);
  // Unit descriptors: |a - b|^2 = 2 - 2 a.b, so nearest == largest dot.
  const Eigen::MatrixXf sim = q * t.transpose();

  const Eigen::Index nq = sim.rows();
  const Eigen::Index nt = sim.cols();
  std::vector<Eigen::Index> best_t(static_cast<std::size_t>(nq));
  std::vector<Eigen::Index> best_q(static_cast<std::size_t>(nt), -1);
  std::vector<float> best_q_val(static_cast<std::size_t>(nt), -std::numeric_limits<float>::infinity());
  for (Eigen::Index i = 0; i < nq; ++i) {
    Eigen::Index arg = 0;
    float val = sim(i, 0);
    for (Eigen::Index j = 1; j < nt; ++j) {
      if (sim(i, j) > val) {
        val = sim(i, j);
        arg = j;
      }
    }
    best_t[std::size_t(i)] = arg;
    for (Eigen::Index j = 0; j < nt; ++j) {
      if (sim(i, j) > best_q_val[std::size_t(j)]) {
        best_q_val[std::size_t(j)] = sim(i, j);
        best_q[std::size_t(j)] = i;
      }
    }
  }
  for (Eigen::Index i = 0; i < nq; ++i) {
    const Eigen::Index j = best_t[std::size_t(i)];
    if (best_q[std::size_t(j)] != i) continue;
    const double dist = std::sqrt(std::max(0.0, 2.0 - 2.0 * double(sim(i, j))));
    if (dist <= cfg.max_descriptor_distance) out.push_back({std::size_t(i), std::size_t(j), dist});
  }
  return out;
}

}  // namespace vnav
