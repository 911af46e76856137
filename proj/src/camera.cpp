#include "arbor/camera.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "arbor/error.hpp"

namespace arbor {

Mat3 Intrinsics::K() const {
  Mat3 k;
  k << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return k;
}

bool Intrinsics::valid() const noexcept {
  return fx > 0 && fy > 0 && cx >= 0 && cy >= 0 && cx < width && cy < height;
}

bool Extrinsics::valid(double tol) const {
  return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(R.determinant() - 1.0) <= tol && t.allFinite();
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return s;
}

Mat3 rotation_from_axis_angle(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-15) return Mat3::Identity() + skew(omega);
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

Vec2 project(const Camera& camera, const Vec3& point) {
  const Vec3 pc = camera.to_camera(point);
  if (!(pc.z() > 0)) throw Error(Errc::NonPositiveDepth, "point behind camera " + camera.id);
  const auto& k = camera.intrinsics;
  return {k.fx * pc.x() / pc.z() + k.cx, k.fy * pc.y() / pc.z() + k.cy};
}

Ray pixel_ray(const Camera& camera, const Vec2& pixel) {
  const auto& k = camera.intrinsics;
  const Vec3 dc((pixel.x() - k.cx) / k.fx, (pixel.y() - k.cy) / k.fy, 1.0);
  return {camera.center(), (camera.extrinsics.R.transpose() * dc).normalized()};
}

Vec3 unproject(const Camera& camera, const Vec2& pixel, double depth) {
  const auto& k = camera.intrinsics;
  const Vec3 pc((pixel.x() - k.cx) / k.fx * depth, (pixel.y() - k.cy) / k.fy * depth, depth);
  return camera.extrinsics.R.transpose() * (pc - camera.extrinsics.t);
}

Vec3 parallel_plane_intersect(const Camera& camera, const Ray& ray, const Vec3& anchor) {
  const Vec3 axis = camera.view_axis();
  const double denom = ray.direction.dot(axis);
  if (std::abs(denom) <= 1e-12) throw Error(Errc::RayParallelToPlane, "ray lies parallel to the image plane");
  const double s = (anchor - ray.origin).dot(axis) / denom;
  return ray.at(s);
}

Mat3 fundamental_matrix(const Camera& cam1, const Camera& cam2) {
  const Vec3 c1 = cam1.center();
  const Vec3 c2 = cam2.center();
  if ((c1 - c2).norm() <= 1e-12 * std::max(1.0, c1.norm())) {
    throw Error(Errc::CoincidentCenters, cam1.id + " and " + cam2.id + " share an optical center");
  }
  const Mat3 R = cam2.extrinsics.R * cam1.extrinsics.R.transpose();
  const Vec3 t = cam2.extrinsics.t - R * cam1.extrinsics.t;
  const Mat3 E = skew(t) * R;
  return cam2.intrinsics.K().inverse().transpose() * E * cam1.intrinsics.K().inverse();
}

Vec3 epipolar_line(const Mat3& F, const Vec2& x1) {
  Vec3 l = F * x1.homogeneous();
  const double n = std::hypot(l.x(), l.y());
  if (n > 0) l /= n;
  return l;
}

namespace {

Extrinsics dlt_pose(std::span<const Correspondence> cs, std::span<const std::size_t> idx, const Intrinsics& k) {
  const std::size_t n = idx.size();
  Vec3 centroid = Vec3::Zero();
  for (auto i : idx) centroid += cs[i].world;
  centroid /= static_cast<double>(n);
  double mean_dist = 0;
  for (auto i : idx) mean_dist += (cs[i].world - centroid).norm();
  mean_dist /= static_cast<double>(n);
  if (mean_dist <= 0) throw Error(Errc::DegenerateConfiguration, "all 3D points coincide");
  const double s = std::sqrt(3.0) / mean_dist;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(n), 12);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& c = cs[idx[r]];
    const Eigen::Vector4d X = (s * (c.world - centroid)).homogeneous();
    const double a = (c.pixel.x() - k.cx) / k.fx;
    const double b = (c.pixel.y() - k.cy) / k.fy;
    const auto row = static_cast<Eigen::Index>(2 * r);
    A.block<1, 4>(row, 0) = X.transpose();
    A.block<1, 4>(row, 8) = -a * X.transpose();
    A.block<1, 4>(row + 1, 4) = X.transpose();
    A.block<1, 4>(row + 1, 8) = -b * X.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A rank-deficient system (coplanar or collinear points) has a null space
  // wider than one dimension.
  if (sv.size() < 12 || sv(10) <= 1e-9 * sv(0)) {
    throw Error(Errc::DegenerateConfiguration, "linear PnP stage is rank deficient");
  }
  const Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> Pn;
  Pn << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), p(8), p(9), p(10), p(11);
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() *= s;
  T.topRightCorner<3, 1>() = -s * centroid;
  Eigen::Matrix<double, 3, 4> P = Pn * T;
  Mat3 M = P.leftCols<3>();
  if (M.determinant() < 0) {
    P = -P;
    M = -M;
  }
  Eigen::JacobiSVD<Mat3> msvd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const double scale = msvd.singularValues().mean();
  if (!(scale > 0)) throw Error(Errc::DegenerateConfiguration, "degenerate camera matrix");
  Extrinsics e;
  e.R = msvd.matrixU() * msvd.matrixV().transpose();
  e.t = P.col(3) / scale;
  return e;
}

double reprojection_cost(std::span<const Correspondence> cs, std::span<const std::size_t> idx, const Intrinsics& k,
                         const Extrinsics& e) {
  double cost = 0;
  for (auto i : idx) {
    const Vec3 pc = e.R * cs[i].world + e.t;
    if (!(pc.z() > 0)) return std::numeric_limits<double>::infinity();
    const double u = k.fx * pc.x() / pc.z() + k.cx - cs[i].pixel.x();
    const double v = k.fy * pc.y() / pc.z() + k.cy - cs[i].pixel.y();
    cost += u * u + v * v;
  }
  return cost;
}

PnpResult refine(std::span<const Correspondence> cs, std::vector<std::size_t> idx, const Intrinsics& k,
                 Extrinsics pose, const PnpOptions& opt) {
  PnpResult res;
  const double n = static_cast<double>(idx.size());
  double cost = reprojection_cost(cs, idx, k, pose);
  if (!std::isfinite(cost)) throw Error(Errc::NoConvergence, "linear PnP places points behind the camera");
  res.rms_history.push_back(std::sqrt(cost / n));

  int it = 0;
  for (; it < opt.max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (auto i : idx) {
      const Vec3 rx = pose.R * cs[i].world;
      const Vec3 pc = rx + pose.t;
      const double iz = 1.0 / pc.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << k.fx * iz, 0, -k.fx * pc.x() * iz * iz, 0, k.fy * iz, -k.fy * pc.y() * iz * iz;
      Eigen::Matrix<double, 3, 6> dpc;
      dpc.leftCols<3>() = -skew(rx);
      dpc.rightCols<3>() = Mat3::Identity();
      const Eigen::Matrix<double, 2, 6> J = dproj * dpc;
      const Vec2 r(k.fx * pc.x() * iz + k.cx - cs[i].pixel.x(), k.fy * pc.y() * iz + k.cy - cs[i].pixel.y());
      H += J.transpose() * J;
      g += J.transpose() * r;
    }
    const Eigen::Matrix<double, 6, 1> delta = H.ldlt().solve(-g);
    if (!delta.allFinite()) break;

    // Backtrack so the cost never increases.
    double step = 1.0;
    bool accepted = false;
    Extrinsics trial;
    double trial_cost = cost;
    for (int halving = 0; halving < 20; ++halving, step *= 0.5) {
      const Eigen::Matrix<double, 6, 1> d = step * delta;
      trial.R = rotation_from_axis_angle(d.head<3>()) * pose.R;
      trial.t = pose.t + d.tail<3>();
      trial_cost = reprojection_cost(cs, idx, k, trial);
      if (trial_cost <= cost) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double decrease = cost - trial_cost;
    pose = trial;
    // Re-orthonormalize to keep R on SO(3) after repeated updates.
    Eigen::JacobiSVD<Mat3> svd(pose.R, Eigen::ComputeFullU | Eigen::ComputeFullV);
    pose.R = svd.matrixU() * svd.matrixV().transpose();
    cost = std::min(trial_cost, reprojection_cost(cs, idx, k, pose));
    res.rms_history.push_back(std::sqrt(cost / n));
    if (decrease <= opt.tolerance * std::max(cost, 1e-300) || delta.norm() < 1e-15) {
      ++it;
      break;
    }
  }
  if (!pose.R.allFinite() || !pose.t.allFinite() || !std::isfinite(cost)) {
    throw Error(Errc::NoConvergence, "PnP refinement diverged");
  }
  res.pose = pose;
  res.iterations = it;
  res.rms_px = std::sqrt(cost / n);
  res.inliers = std::move(idx);
  return res;
}

}  // namespace

PnpResult solve_pnp(std::span<const Correspondence> correspondences, const Intrinsics& intrinsics,
                    const PnpOptions& options) {
  constexpr std::size_t kMinPoints = 6;
  if (correspondences.size() < kMinPoints) {
    throw Error(Errc::DegenerateConfiguration, "PnP needs at least 6 correspondences, got " +
                                                   std::to_string(correspondences.size()));
  }
  std::vector<std::size_t> all(correspondences.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  if (!options.ransac) {
    return refine(correspondences, all, intrinsics, dlt_pose(correspondences, all, intrinsics), options);
  }

  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> best_inliers;
  const double thr2 = options.inlier_threshold_px * options.inlier_threshold_px;
  for (int iter = 0; iter < options.ransac_iterations; ++iter) {
    std::vector<std::size_t> sample;
    std::sample(all.begin(), all.end(), std::back_inserter(sample), kMinPoints, rng);
    Extrinsics model;
    try {
      model = dlt_pose(correspondences, sample, intrinsics);
    } catch (const Error&) {
      continue;
    }
    std::vector<std::size_t> inliers;
    for (auto i : all) {
      const std::size_t one[] = {i};
      if (reprojection_cost(correspondences, one, intrinsics, model) <= thr2) inliers.push_back(i);
    }
    if (inliers.size() > best_inliers.size()) best_inliers = std::move(inliers);
  }
  if (best_inliers.size() < kMinPoints) {
    throw Error(Errc::DegenerateConfiguration, "RANSAC found no consensus set of 6 or more points");
  }
  return refine(correspondences, best_inliers, intrinsics, dlt_pose(correspondences, best_inliers, intrinsics),
                options);
}

}  // namespace arbor
