#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "depthfit/geometry.hpp"
#include "depthfit/imaging.hpp"
#include "depthfit/objects.hpp"

namespace dfit {

struct PlaneConfig {
  Eigen::Vector3d normal = {0, 0, 1};  // world frame, unit length after parse
  double offset = 10;                  // plane: normal . X = offset
  std::uint64_t texture_seed = 0;
  double texture_scale = 1.0;          // texture-space units per metre
};

struct ObjectConfig {
  Eigen::Vector3d dims = {1, 1, 1};    // (w, h, l) metres
  SE3Pose initial_pose;                // object -> world at step 0
  SE3Pose per_step_motion;             // V, in the object frame, per step
  std::uint64_t texture_seed = 1;
};

/// Deterministic synthetic world: textured background planes, yaw-rotated
/// box objects, and a camera trajectory.
struct SceneConfig {
  int width = 64, height = 64;
  Intrinsics intrinsics;
  std::uint64_t seed = 0;
  std::vector<PlaneConfig> background;
  std::vector<ObjectConfig> objects;
  std::vector<SE3Pose> trajectory;     // camera -> world per time step

  /// Parse from a strict JSON document (unknown keys rejected).
  /// Throws std::runtime_error on schema violations.
  static SceneConfig from_json_text(const std::string& text);
  static SceneConfig from_json_file(const std::string& path);
};

struct RenderedFrame {
  Image image;
  DepthMap depth;                      // ground truth, camera-frame z
  BinaryMask background_mask;
  std::vector<BinaryMask> object_masks;        // one per visible object
  std::vector<int> object_ids;                 // scene object index per mask
  DetectionSet detections;                     // aligned with object_masks
  SE3Pose camera_pose;                 // camera -> world
};

/// Ray-cast render at the given trajectory step. Throws std::runtime_error
/// if any ray misses the background (frustum not covered) or the step is out
/// of range.
RenderedFrame render_frame(const SceneConfig& scene, int time);

/// Deterministic multi-octave value noise in [0.1, 0.9].
std::array<double, 3> procedural_texture(std::uint64_t seed, double u, double v);

/// Seeded Gaussian noise on cuboid center, dimensions and yaw.
DetectionSet perturb_detections(const DetectionSet& set, double center_sigma, double dims_sigma,
                                double yaw_sigma, std::uint64_t seed);

/// Object pose in the world frame at the given step: initial * V^time.
SE3Pose object_world_pose(const ObjectConfig& obj, int time);

} // namespace dfit
