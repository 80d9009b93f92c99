#include "vnav/plane.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "vnav/error.hpp"

namespace vnav {
namespace {

PlaneModel oriented(Vec3 normal, double offset) {
  const double n = normal.norm();
  normal /= n;
  offset /= n;
  // Planes through the origin have no preferred side; pick +z, then +y, +x.
  bool flip = offset < 0.0;
  if (std::abs(offset) < 1e-12) {
    offset = 0.0;
    for (int axis = 2; axis >= 0; --axis) {
      if (std::abs(normal(axis)) > 1e-12) {
        flip = normal(axis) < 0.0;
        break;
      }
    }
  }
  if (flip) {
    normal = -normal;
    offset = -offset;
  }
  return {normal, offset};
}

bool collinear(const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const double scale = std::max(ab.squaredNorm(), ac.squaredNorm());
  return !(scale > 0.0) || ab.cross(ac).squaredNorm() <= 1e-20 * scale * scale;
}

}  // namespace

PlaneModel fit_plane_lsq(const std::vector<Vec3>& points) {
  if (points.size() < 3) throw Error(ErrorCode::DegenerateInput, "plane fit needs at least 3 points");
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= double(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - centroid;
    cov.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const auto& ev = eig.eigenvalues();  // ascending
  if (!(ev(2) > 0.0) || ev(1) <= 1e-18 * ev(2)) {
    throw Error(ErrorCode::DegenerateInput, "points are collinear");
  }
  const Vec3 normal = eig.eigenvectors().col(0);
  return oriented(normal, -normal.dot(centroid));
}

PlaneModel fit_plane_ransac(const std::vector<Vec3>& points, const RansacConfig& cfg) {
  if (points.size() < 3) throw Error(ErrorCode::DegenerateInput, "plane fit needs at least 3 points");
  cfg.validate();

  PlaneModel hypothesis;
  PlaneModel best;
  RansacDriver driver(points.size(), 3, cfg);
  const auto outcome = driver.run(
      [&](const std::vector<std::size_t>& s) {
        const Vec3& a = points[s[0]];
        const Vec3& b = points[s[1]];
        const Vec3& c = points[s[2]];
        if (collinear(a, b, c)) return false;
        const Vec3 n = (b - a).cross(c - a);
        hypothesis = oriented(n, -n.dot(a));
        return true;
      },
      [&] {
        std::vector<std::size_t> ids;
        for (std::size_t i = 0; i < points.size(); ++i) {
          if (std::abs(hypothesis.signed_distance(points[i])) <= cfg.inlier_threshold) ids.push_back(i);
        }
        return ids;
      },
      [&] { best = hypothesis; });
  if (!outcome) throw Error(ErrorCode::DegenerateInput, "every sample was collinear");

  if (outcome->inliers.size() < 3) return best;
  std::vector<Vec3> inliers;
  inliers.reserve(outcome->inliers.size());
  for (auto i : outcome->inliers) inliers.push_back(points[i]);
  try {
    return fit_plane_lsq(inliers);
  } catch (const Error&) {
    return best;
  }
}

}  // namespace vnav
