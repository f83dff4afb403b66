#include "depthfit/geometry.hpp"

#include <Eigen/Geometry>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

namespace dfit {

namespace {

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Eigen::Matrix3d reorthonormalize(const Eigen::Matrix3d& r) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d q = svd.matrixU() * svd.matrixV().transpose();
  if (q.determinant() < 0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) *= -1;
    q = u * svd.matrixV().transpose();
  }
  return q;
}

} // namespace

SE3Pose SE3Pose::from_yaw(double yaw, const Eigen::Vector3d& t) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Eigen::Matrix3d r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return {r, t};
}

bool SE3Pose::is_orthonormal(double tol) const {
  const Eigen::Matrix3d e = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  return e.norm() < tol && rotation.determinant() > 0;
}

SE3Pose compose(const SE3Pose& a, const SE3Pose& b) {
  SE3Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  const Eigen::Matrix3d drift =
      out.rotation.transpose() * out.rotation - Eigen::Matrix3d::Identity();
  if (drift.norm() > 1e-12) out.rotation = reorthonormalize(out.rotation);
  return out;
}

SE3Pose invert(const SE3Pose& t) {
  SE3Pose out;
  out.rotation = t.rotation.transpose();
  out.translation = -(out.rotation * t.translation);
  return out;
}

Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    return Eigen::Matrix3d::Identity() + skew(w);
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Eigen::Vector3d matrix_to_axis_angle(const Eigen::Matrix3d& r) {
  Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

std::array<Eigen::Matrix3d, 3> axis_angle_jacobians(const Eigen::Vector3d& w) {
  std::array<Eigen::Matrix3d, 3> out;
  const double theta2 = w.squaredNorm();
  const Eigen::Matrix3d r = axis_angle_to_matrix(w);
  if (theta2 < 1e-16) {
    for (int i = 0; i < 3; ++i) out[i] = skew(Eigen::Vector3d::Unit(i));
    return out;
  }
  const Eigen::Matrix3d eye_minus_r = Eigen::Matrix3d::Identity() - r;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d ei = Eigen::Vector3d::Unit(i);
    const Eigen::Vector3d v = w.cross(eye_minus_r * ei);
    out[i] = ((w(i) * skew(w) + skew(v)) / theta2) * r;
  }
  return out;
}

Eigen::Vector3d backproject(const PixelCoord& p, double depth, const Intrinsics& k) {
  if (!(depth > 0)) throw std::domain_error("backproject: depth must be positive");
  return {depth * (p.u - k.cx) / k.fx, depth * (p.v - k.cy) / k.fy, depth};
}

std::optional<PixelCoord> try_project(const Eigen::Vector3d& pt, const Intrinsics& k) {
  if (!(pt.z() > 0)) return std::nullopt;
  return PixelCoord{k.fx * pt.x() / pt.z() + k.cx, k.fy * pt.y() / pt.z() + k.cy};
}

PixelCoord project(const Eigen::Vector3d& pt, const Intrinsics& k) {
  auto p = try_project(pt, k);
  if (!p) throw std::domain_error("project: point behind camera");
  return *p;
}

PixelCoord warp_static(const PixelCoord& p, double depth, const Intrinsics& k, const SE3Pose& t) {
  return project(t.apply(backproject(p, depth, k)), k);
}

PixelCoord warp_dynamic(const PixelCoord& p, double depth, const Intrinsics& k,
                        const SE3Pose& l_s, const SE3Pose& l_t) {
  return project(compose(l_s, invert(l_t)).apply(backproject(p, depth, k)), k);
}

SE3Pose object_motion(const SE3Pose& t_ts, const SE3Pose& l_s, const SE3Pose& l_t) {
  return compose(invert(l_s), compose(t_ts, l_t));
}

} // namespace dfit
