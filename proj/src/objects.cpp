#include "depthfit/objects.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace dfit {

SE3Pose pose_from_cuboid(const Cuboid& c) {
  return SE3Pose::from_yaw(c.yaw, c.center);
}

double iou_2d(const Cuboid& a, const Cuboid& b) {
  const double ix = std::max(0.0, std::min(a.x2d + a.w2d, b.x2d + b.w2d) - std::max(a.x2d, b.x2d));
  const double iy = std::max(0.0, std::min(a.y2d + a.h2d, b.y2d + b.h2d) - std::max(a.y2d, b.y2d));
  const double inter = ix * iy;
  const double uni = a.w2d * a.h2d + b.w2d * b.h2d - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double centroid_score(const Cuboid& a, const Cuboid& b) {
  return std::exp(-(a.center - b.center).norm());
}

double shape_score(const Cuboid& a, const Cuboid& b) {
  return std::exp(-std::abs(a.w3d - b.w3d)) + std::exp(-std::abs(a.h3d - b.h3d)) +
         std::exp(-std::abs(a.l3d - b.l3d));
}

double association_score(const Cuboid& a, const Cuboid& b, double alpha_assoc) {
  return iou_2d(a, b) + centroid_score(a, b) + alpha_assoc * shape_score(a, b);
}

Association associate(const DetectionSet& targets, const DetectionSet& sources,
                      double alpha_assoc, double score_threshold) {
  const int nt = static_cast<int>(targets.cuboids.size());
  const int ns = static_cast<int>(sources.cuboids.size());
  std::vector<double> scores(static_cast<std::size_t>(nt) * ns);
  for (int i = 0; i < nt; ++i)
    for (int j = 0; j < ns; ++j)
      scores[static_cast<std::size_t>(i) * ns + j] =
          association_score(targets.cuboids[i], sources.cuboids[j], alpha_assoc);

  Association out;
  std::vector<bool> t_used(nt, false), s_used(ns, false);
  while (true) {
    double best = score_threshold;
    int bi = -1, bj = -1;
    for (int i = 0; i < nt; ++i) {
      if (t_used[i]) continue;
      for (int j = 0; j < ns; ++j) {
        if (s_used[j]) continue;
        const double s = scores[static_cast<std::size_t>(i) * ns + j];
        if (s > best) {
          best = s;
          bi = i;
          bj = j;
        }
      }
    }
    if (bi < 0) break;
    t_used[bi] = true;
    s_used[bj] = true;
    out.pairs.push_back({bi, bj, best});
  }
  for (int i = 0; i < nt; ++i)
    if (!t_used[i]) out.unmatched_targets.push_back(i);
  for (int j = 0; j < ns; ++j)
    if (!s_used[j]) out.unmatched_sources.push_back(j);
  return out;
}

MotionLabel classify_motion(int object_index, const SE3Pose& l_s, const SE3Pose& l_t,
                            const SE3Pose& t_ts, const DepthMap& depth, const Intrinsics& k,
                            const BinaryMask& mask, double eps_static) {
  if (mask.count() == 0) throw std::invalid_argument("classify_motion: empty object mask");
  double sum = 0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      const PixelCoord p{static_cast<double>(x), static_cast<double>(y)};
      const double d = depth.at(x, y);
      const auto ps = try_project(t_ts.apply(backproject(p, d, k)), k);
      const auto pd = try_project(compose(l_s, invert(l_t)).apply(backproject(p, d, k)), k);
      if (!ps || !pd) continue;  // behind-camera pixels carry no evidence
      sum += std::hypot(ps->u - pd->u, ps->v - pd->v);
      ++n;
    }
  MotionLabel out;
  out.object_index = object_index;
  out.mean_discrepancy_px = n > 0 ? sum / static_cast<double>(n) : 0.0;
  out.is_static = out.mean_discrepancy_px < eps_static;
  return out;
}

std::string detections_to_csv(const DetectionSet& set) {
  std::ostringstream os;
  os.precision(17);
  os << "frame,index,x2d,y2d,w2d,h2d,w3d,h3d,l3d,xc,yc,zc,yaw\n";
  for (std::size_t i = 0; i < set.cuboids.size(); ++i) {
    const Cuboid& c = set.cuboids[i];
    os << set.frame << "," << i << "," << c.x2d << "," << c.y2d << "," << c.w2d << "," << c.h2d
       << "," << c.w3d << "," << c.h3d << "," << c.l3d << "," << c.center.x() << ","
       << c.center.y() << "," << c.center.z() << "," << c.yaw << "\n";
  }
  return os.str();
}

DetectionSet detections_from_csv(const std::string& csv) {
  DetectionSet set;
  std::istringstream is(csv);
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("frame,", 0) == 0) continue;  // header
    }
    std::istringstream ls(line);
    std::vector<double> fields;
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      try {
        fields.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw std::runtime_error("detections_from_csv: malformed field '" + tok + "'");
      }
    }
    if (fields.size() != 13) throw std::runtime_error("detections_from_csv: expected 13 columns");
    set.frame = static_cast<int>(fields[0]);
    Cuboid c;
    c.x2d = fields[2];
    c.y2d = fields[3];
    c.w2d = fields[4];
    c.h2d = fields[5];
    c.w3d = fields[6];
    c.h3d = fields[7];
    c.l3d = fields[8];
    c.center = {fields[9], fields[10], fields[11]};
    c.yaw = fields[12];
    set.cuboids.push_back(c);
  }
  return set;
}

} // namespace dfit
