#include "vnav/pnp.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "vnav/error.hpp"

namespace vnav {
namespace {

// Camera axes (forward, left, up) to the optical axes (right, down, forward).
const Mat3& camera_to_optical() {
  static const Mat3 c = (Mat3() << 0, -1, 0, 0, 0, -1, 1, 0, 0).finished();
  return c;
}

// World-to-camera transform held as (R, t): p_cam = R * p + t.
struct Extrinsics {
  Mat3 rotation;
  Vec3 translation;

  static Extrinsics from_camera_pose(const Pose& pose) {
    const Mat3 r = pose.rotation.toRotationMatrix().transpose();
    return {r, -r * pose.translation};
  }
  Pose camera_pose() const {
    Pose p;
    const Mat3 rwc = rotation.transpose();
    p.rotation = Eigen::Quaterniond(rwc).normalized();
    p.translation = -rwc * translation;
    return p;
  }
};

double cost_of(const Extrinsics& e, const std::vector<Correspondence2D3D>& corrs, const CameraModel& cam) {
  double cost = 0.0;
  for (const auto& c : corrs) {
    const Vec3 pc = e.rotation * c.point + e.translation;
    const auto px = project_camera(cam, pc);
    if (!px) return std::numeric_limits<double>::infinity();
    const double du = px->u - c.pixel.u;
    const double dv = px->v - c.pixel.v;
    cost += du * du + dv * dv;
  }
  return cost;
}

Eigen::Matrix3d nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace

std::optional<Pose> solve_pnp_dlt(const std::vector<Correspondence2D3D>& corrs, const CameraModel& cam) {
  const std::size_t n = corrs.size();
  if (n < kPnPMinimalSample) return std::nullopt;

  Vec3 mean = Vec3::Zero();
  for (const auto& c : corrs) mean += c.point;
  mean /= double(n);
  double spread = 0.0;
  for (const auto& c : corrs) spread += (c.point - mean).norm();
  spread /= double(n);
  if (!(spread > 1e-12)) return std::nullopt;
  const double s = std::sqrt(3.0) / spread;

  Eigen::Matrix<double, Eigen::Dynamic, 12> a(2 * n, 12);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 x = (corrs[i].point - mean) * s;
    const double xn = (corrs[i].pixel.u - cam.cx) / cam.fx;
    const double yn = (corrs[i].pixel.v - cam.cy) / cam.fy;
    Eigen::Matrix<double, 1, 4> xh(x.x(), x.y(), x.z(), 1.0);
    a.row(2 * i) << -xh, Eigen::Matrix<double, 1, 4>::Zero(), xn * xh;
    a.row(2 * i + 1) << Eigen::Matrix<double, 1, 4>::Zero(), -xh, yn * xh;
  }
  // Null vector of A from the normal equations; eigenvalues are squared
  // singular values, ascending.
  const Eigen::Matrix<double, 12, 12> ata = a.transpose() * a;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 12, 12>> eig(ata);
  if (eig.info() != Eigen::Success) return std::nullopt;
  const auto& ev = eig.eigenvalues();
  if (!(ev(11) > 0.0)) return std::nullopt;
  // A second (near) null direction means the sample is coplanar or otherwise
  // degenerate.
  if (ev(1) < 1e-14 * ev(11)) return std::nullopt;
  const Eigen::Matrix<double, 12, 1> p = eig.eigenvectors().col(0);
  Eigen::Matrix<double, 3, 4> proj;
  proj.row(0) = p.segment<4>(0).transpose();
  proj.row(1) = p.segment<4>(4).transpose();
  proj.row(2) = p.segment<4>(8).transpose();

  Mat3 m = proj.leftCols<3>() * s;
  Vec3 t = proj.col(3) - m * mean;
  const double det = m.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-300) return std::nullopt;
  if (det < 0.0) {
    m = -m;
    t = -t;
  }
  Eigen::JacobiSVD<Mat3> msvd(m);
  const double scale = msvd.singularValues().mean();
  if (!(scale > 0.0)) return std::nullopt;
  const Mat3 r_opt = nearest_rotation(m);
  t /= scale;

  const Mat3& c = camera_to_optical();
  Extrinsics e{c.transpose() * r_opt, c.transpose() * t};
  if (!e.rotation.allFinite() || !e.translation.allFinite()) return std::nullopt;
  return e.camera_pose();
}

double reprojection_error(const Pose& camera_pose, const Correspondence2D3D& c, const CameraModel& cam) {
  const Vec3 pc = camera_pose.rotation.conjugate() * (c.point - camera_pose.translation);
  const auto px = project_camera(cam, pc);
  if (!px) return std::numeric_limits<double>::infinity();
  return std::hypot(px->u - c.pixel.u, px->v - c.pixel.v);
}

double reprojection_cost(const Pose& camera_pose, const std::vector<Correspondence2D3D>& corrs,
                         const CameraModel& cam) {
  return cost_of(Extrinsics::from_camera_pose(camera_pose), corrs, cam);
}

Pose refine_pose_gn(const Pose& initial, const std::vector<Correspondence2D3D>& inliers,
                    const CameraModel& cam, RefineOptions opts) {
  if (inliers.size() < kPnPMinimalSample) {
    throw Error(ErrorCode::InsufficientData, "refinement needs at least 6 correspondences");
  }
  Extrinsics e = Extrinsics::from_camera_pose(initial);
  double cost = cost_of(e, inliers, cam);
  if (!std::isfinite(cost)) throw Error(ErrorCode::RefinementFailed, "initial pose does not reproject all points");

  bool moved = false;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (const auto& c : inliers) {
      const Vec3 rx = e.rotation * c.point;
      const Vec3 pc = rx + e.translation;
      const double x = pc.x(), y = pc.y(), z = pc.z();
      const double inv = 1.0 / x;
      const double u = cam.cx - cam.fx * y * inv;
      const double v = cam.cy - cam.fy * z * inv;
      Eigen::Matrix<double, 2, 3> jp;
      jp << cam.fx * y * inv * inv, -cam.fx * inv, 0.0, cam.fy * z * inv * inv, 0.0, -cam.fy * inv;
      Eigen::Matrix<double, 3, 6> jx;
      jx.leftCols<3>() = -skew(rx);
      jx.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> j = jp * jx;
      const Eigen::Vector2d r(u - c.pixel.u, v - c.pixel.v);
      h.noalias() += j.transpose() * j;
      g.noalias() += j.transpose() * r;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> eig(h, Eigen::EigenvaluesOnly);
    const double emax = eig.eigenvalues().maxCoeff();
    const double emin = eig.eigenvalues().minCoeff();
    if (!(emax > 0.0) || emin <= 1e-14 * emax) {
      throw Error(ErrorCode::RefinementFailed, "singular normal equations");
    }
    Eigen::Matrix<double, 6, 1> step = -h.ldlt().solve(g);
    if (!step.allFinite()) throw Error(ErrorCode::RefinementFailed, "non-finite update");
    if (step.norm() < opts.tol) break;

    bool accepted = false;
    for (int halving = 0; halving < 30; ++halving) {
      Extrinsics cand = e;
      cand.rotation = exp_so3(step.head<3>()).toRotationMatrix() * e.rotation;
      cand.translation = e.translation + step.tail<3>();
      const double c_new = cost_of(cand, inliers, cam);
      if (c_new <= cost) {
        e = cand;
        cost = c_new;
        accepted = true;
        moved = true;
        break;
      }
      step *= 0.5;
      if (step.norm() < opts.tol) break;
    }
    if (!accepted) break;
  }
  return moved ? e.camera_pose() : initial;
}

PnPResult solve_pnp_ransac(const std::vector<Correspondence2D3D>& corrs, const CameraModel& cam,
                           const RansacConfig& cfg) {
  if (corrs.size() < kPnPMinimalSample) {
    throw Error(ErrorCode::InsufficientData, "PnP needs at least 6 correspondences, got " +
                                                 std::to_string(corrs.size()));
  }
  cfg.validate();

  const double thr2 = cfg.inlier_threshold * cfg.inlier_threshold;
  const auto inliers_of = [&](const Pose& pose) {
    const Extrinsics e = Extrinsics::from_camera_pose(pose);
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < corrs.size(); ++i) {
      const Vec3 pc = e.rotation * corrs[i].point + e.translation;
      if (!(pc.x() > 0.0)) continue;
      const double du = cam.cx - cam.fx * pc.y() / pc.x() - corrs[i].pixel.u;
      const double dv = cam.cy - cam.fy * pc.z() / pc.x() - corrs[i].pixel.v;
      if (du * du + dv * dv <= thr2) ids.push_back(i);
    }
    return ids;
  };

  Pose hypothesis;
  Pose best;
  RansacDriver driver(corrs.size(), kPnPMinimalSample, cfg);
  std::vector<Correspondence2D3D> sample_corrs(kPnPMinimalSample);
  const auto outcome = driver.run(
      [&](const std::vector<std::size_t>& sample) {
        for (std::size_t k = 0; k < sample.size(); ++k) sample_corrs[k] = corrs[sample[k]];
        auto pose = solve_pnp_dlt(sample_corrs, cam);
        if (!pose) return false;
        hypothesis = *pose;
        return true;
      },
      [&] { return inliers_of(hypothesis); }, [&] { best = hypothesis; });

  if (!outcome || outcome->inliers.size() < kPnPMinimalSample) {
    throw Error(ErrorCode::NoConsensus, "best consensus below 6 inliers");
  }

  std::vector<std::size_t> inliers = outcome->inliers;
  Pose pose = best;
  for (int round = 0; round < 2; ++round) {
    std::vector<Correspondence2D3D> subset;
    subset.reserve(inliers.size());
    for (auto i : inliers) subset.push_back(corrs[i]);
    Pose refined;
    try {
      refined = refine_pose_gn(pose, subset, cam);
    } catch (const Error&) {
      break;
    }
    auto refined_inliers = inliers_of(refined);
    if (refined_inliers.size() < inliers.size()) break;
    const bool unchanged = refined_inliers == inliers;
    pose = refined;
    inliers = std::move(refined_inliers);
    if (unchanged) break;
  }

  inliers = inliers_of(pose);
  if (inliers.size() < kPnPMinimalSample) throw Error(ErrorCode::NoConsensus, "consensus lost after refinement");
  double err = 0.0;
  for (auto i : inliers) err += reprojection_error(pose, corrs[i], cam);
  const double mean_err = err / double(inliers.size());
  return {pose, std::move(inliers), mean_err};
}

}  // namespace vnav
