#pragma once

#include <functional>
#include <vector>

#include <Eigen/Core>

#include "depthfit/losses.hpp"
#include "depthfit/scene.hpp"

namespace dfit {

/// Raw disparity -> depth in (0.1, 80) via a logistic squash:
/// D = 1 / (a * sigmoid(raw) + b), a = 1/0.1 - 1/80, b = 1/80.
double disp_to_depth(double raw);
double disp_to_depth_grad(double raw);
/// Inverse map (throws if depth outside the open range).
double depth_to_disp(double depth);

/// Central finite differences: (f(x + h e_i) - f(x - h e_i)) / 2h.
/// Throws if an evaluation is non-finite.
Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h = 1e-4);

/// 6-DoF pose parameterization: axis-angle rotation plus translation.
struct PoseParams {
  Eigen::Vector3d axis_angle = Eigen::Vector3d::Zero();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  SE3Pose to_pose() const;
  static PoseParams from_pose(const SE3Pose& p);
};

struct FitConfig {
  double lr_depth = 2000.0;
  double lr_pose = 0.05;
  int iterations = 500;
  LossWeights weights;
  bool optimize_depth = true;
  bool optimize_pose = true;
  bool optimize_object_translations = false;
  bool use_dynamic_warp = true;  // false = static-warp-everywhere ablation
  bool step_halving = true;
  double eps_static = 1.0;       // pixels, static/dynamic classification
  double assoc_alpha = 0.5;
  double assoc_threshold = 0.5;
  std::uint64_t seed = 0;
};

/// Free parameters of one fit: a raw-disparity map for the target frame and
/// one relative camera pose T_{t->s} per source frame.
struct FitState {
  int width = 0, height = 0;
  Eigen::VectorXd raw_disp;          // width * height
  std::vector<PoseParams> poses;     // per source
  // optional per-(source, target-object) L_s translation offsets
  std::vector<std::vector<Eigen::Vector3d>> object_t_offsets;

  DepthMap depth() const;
  static FitState from_depth(const DepthMap& d, const std::vector<SE3Pose>& poses_ts,
                             int num_target_objects = 0);
};

struct FrameSet {
  RenderedFrame target;
  std::vector<RenderedFrame> sources;
  Intrinsics intrinsics;
};

struct Gradients {
  Eigen::VectorXd raw_disp;
  std::vector<Eigen::Matrix<double, 6, 1>> pose;  // [axis_angle; translation]
  std::vector<std::vector<Eigen::Vector3d>> object_t;
};

/// Captured warp coordinates and per-pixel photometric error, indexed
/// [source][scale]. `u`/`v` are NaN where no sample was taken. Gradient
/// checks use this to locate pixels whose bilinear sample sits near an
/// integer coordinate (where the objective is only C0) and drop them.
struct WarpProbe {
  std::vector<std::vector<DepthMap>> u, v;
  std::vector<std::vector<Image>> pe, recon;
};

/// One objective evaluation: full loss with per-term breakdown and, when
/// `grads` is non-null, analytic gradients for every free parameter group.
/// The gradient chain covers pe -> bilinear sampling -> warping ->
/// back-projection -> disparity squash / pose parameterization; pixels with
/// invalid warps contribute zero gradient.
///
/// `drop` (one mask per scale, 1 = drop) removes pixels from the appearance
/// average in every source view, forward and backward alike; `probe`, when
/// non-null, receives the warp coordinates and pe maps. Both exist for
/// finite-difference verification and are unused during fitting.
LossBreakdown evaluate_objective(const FitState& state, const FrameSet& frames,
                                 const FitConfig& cfg, Gradients* grads,
                                 const std::vector<BinaryMask>* drop = nullptr,
                                 WarpProbe* probe = nullptr);

struct FitReport {
  std::vector<LossBreakdown> rows;   // rows[i] = loss at iteration i
  std::vector<double> scale_ratios;  // med(gt)/med(pred) per iteration
  DepthMap final_depth;
  std::vector<SE3Pose> final_poses;
  double seconds = 0;
  bool diverged = false;
};

/// Thrown when the loss becomes non-finite; carries the partial report.
struct FitDivergence : std::runtime_error {
  FitReport partial;
  explicit FitDivergence(FitReport r)
      : std::runtime_error("fit: loss diverged to a non-finite value"), partial(std::move(r)) {}
};

/// Gradient descent with optional step halving on loss increase. Records one
/// row per iteration plus the initial state; recorded loss is non-increasing
/// when halving is enabled.
FitReport fit(FitState state, const FrameSet& frames, const FitConfig& cfg);

} // namespace dfit
