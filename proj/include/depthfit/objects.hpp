#pragma once

#include <string>
#include <vector>

#include "depthfit/geometry.hpp"
#include "depthfit/imaging.hpp"

namespace dfit {

/// Detected 3D object: 2D box, 3D dimensions, camera-frame center, yaw.
struct Cuboid {
  double x2d = 0, y2d = 0, w2d = 0, h2d = 0;  // pixels, top-left + size
  double w3d = 0, h3d = 0, l3d = 0;           // metres
  Eigen::Vector3d center = Eigen::Vector3d::Zero();  // camera frame, metres
  double yaw = 0;                              // radians about camera y axis
};

struct DetectionSet {
  int frame = 0;
  std::vector<Cuboid> cuboids;  // stable indices: position in the vector
};

struct AssociationPair {
  int target_index = -1;
  int source_index = -1;
  double score = 0;
};

struct Association {
  std::vector<AssociationPair> pairs;
  std::vector<int> unmatched_targets;
  std::vector<int> unmatched_sources;
};

struct MotionLabel {
  int object_index = -1;
  bool is_static = false;
  double mean_discrepancy_px = 0;  // mean |warp_static - warp_dynamic| over the mask
};

/// Object pose in the camera frame: y-axis rotation by yaw, translation = center.
SE3Pose pose_from_cuboid(const Cuboid& c);

double iou_2d(const Cuboid& a, const Cuboid& b);
double centroid_score(const Cuboid& a, const Cuboid& b);  // exp(-||center diff||_2)
double shape_score(const Cuboid& a, const Cuboid& b);     // sum of exp(-|dim diff|)
double association_score(const Cuboid& a, const Cuboid& b, double alpha_assoc);

/// Greedy one-to-one matching: repeatedly pick the globally best remaining
/// pair above `score_threshold`; ties broken by lowest (target, source) index.
Association associate(const DetectionSet& targets, const DetectionSet& sources,
                      double alpha_assoc = 0.5, double score_threshold = 0.5);

/// Labels an associated object static when the mean pixel discrepancy between
/// the camera-motion warp and the object-pose warp over its mask is below
/// eps_static. Throws on an empty mask.
MotionLabel classify_motion(int object_index, const SE3Pose& l_s, const SE3Pose& l_t,
                            const SE3Pose& t_ts, const DepthMap& depth, const Intrinsics& k,
                            const BinaryMask& mask, double eps_static = 1.0);

/// CSV: header plus rows "frame,index,x2d,y2d,w2d,h2d,w3d,h3d,l3d,xc,yc,zc,yaw".
std::string detections_to_csv(const DetectionSet& set);
DetectionSet detections_from_csv(const std::string& csv);

} // namespace dfit
