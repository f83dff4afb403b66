#pragma once

#include <Eigen/Core>
#include <array>
#include <optional>

namespace dfit {

/// Rigid transform in SE(3): x_out = rotation * x_in + translation (metres).
struct SE3Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static SE3Pose identity() { return {}; }
  static SE3Pose from_translation(const Eigen::Vector3d& t) {
    return {Eigen::Matrix3d::Identity(), t};
  }
  /// Rotation about the camera y axis (yaw) plus translation.
  static SE3Pose from_yaw(double yaw, const Eigen::Vector3d& t = Eigen::Vector3d::Zero());

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }
  bool is_orthonormal(double tol = 1e-9) const;
};

SE3Pose compose(const SE3Pose& a, const SE3Pose& b);  // applies b first, then a
SE3Pose invert(const SE3Pose& t);

/// Axis-angle (Rodrigues) exponential and log maps for the optimizer's
/// 3-vector rotation parameterization.
Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& w);
Eigen::Vector3d matrix_to_axis_angle(const Eigen::Matrix3d& r);
/// d(exp(w))/dw_i as three 3x3 matrices (Gallego & Yezzi closed form).
std::array<Eigen::Matrix3d, 3> axis_angle_jacobians(const Eigen::Vector3d& w);

/// Pinhole camera intrinsics in pixels. Integer pixel coordinates address
/// pixel centers.
struct Intrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;

  /// Intrinsics of the image downsampled by factor 2 (pixel-center convention).
  Intrinsics halved() const { return {fx / 2, fy / 2, (cx - 0.5) / 2, (cy - 0.5) / 2}; }
};

struct PixelCoord {
  double u = 0, v = 0;
};

/// Back-project pixel p at the given depth into a camera-frame point.
/// Throws std::domain_error if depth <= 0.
Eigen::Vector3d backproject(const PixelCoord& p, double depth, const Intrinsics& k);

/// Project a camera-frame point; returns nullopt when z <= 0 (behind camera).
std::optional<PixelCoord> try_project(const Eigen::Vector3d& pt, const Intrinsics& k);
/// Throwing variant of try_project (std::domain_error on z <= 0).
PixelCoord project(const Eigen::Vector3d& pt, const Intrinsics& k);

/// Static-world warp: project(t * backproject(p, depth, k), k).
PixelCoord warp_static(const PixelCoord& p, double depth, const Intrinsics& k, const SE3Pose& t);
/// Dynamic-object warp: project(l_s * l_t^-1 * backproject(p, depth, k), k).
PixelCoord warp_dynamic(const PixelCoord& p, double depth, const Intrinsics& k,
                        const SE3Pose& l_s, const SE3Pose& l_t);

/// Object motion in its own frame: V = L_s^-1 * T_ts * L_t.
SE3Pose object_motion(const SE3Pose& t_ts, const SE3Pose& l_s, const SE3Pose& l_t);

} // namespace dfit
