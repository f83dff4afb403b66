#include "depthfit/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>
#include <json.hpp>

namespace dfit {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

[[noreturn]] void config_error(const std::string& what) {
  throw std::runtime_error("scene config: " + what);
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) config_error("unknown key '" + it.key() + "' in " + where);
  }
}

Eigen::Vector3d parse_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) config_error(where + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

SE3Pose parse_pose(const json& j, const std::string& where) {
  reject_unknown_keys(j, {"translation", "yaw"}, where);
  SE3Pose p;
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  if (j.contains("translation")) t = parse_vec3(j["translation"], where + ".translation");
  const double yaw = j.value("yaw", 0.0);
  return SE3Pose::from_yaw(yaw, t);
}

// -- procedural value noise ------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double lattice_value(std::uint64_t seed, std::int64_t xi, std::int64_t yi, int channel) {
  std::uint64_t h = seed;
  h = splitmix64(h ^ (static_cast<std::uint64_t>(xi) * 0xC2B2AE3D27D4EB4Full));
  h = splitmix64(h ^ (static_cast<std::uint64_t>(yi) * 0x165667B19E3779F9ull));
  h = splitmix64(h ^ static_cast<std::uint64_t>(channel));
  return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
}

double smoothstep(double t) { return t * t * (3 - 2 * t); }

double value_noise(std::uint64_t seed, double u, double v, int channel) {
  const double fx = std::floor(u), fy = std::floor(v);
  const auto xi = static_cast<std::int64_t>(fx), yi = static_cast<std::int64_t>(fy);
  const double tx = smoothstep(u - fx), ty = smoothstep(v - fy);
  const double v00 = lattice_value(seed, xi, yi, channel);
  const double v10 = lattice_value(seed, xi + 1, yi, channel);
  const double v01 = lattice_value(seed, xi, yi + 1, channel);
  const double v11 = lattice_value(seed, xi + 1, yi + 1, channel);
  return (1 - ty) * ((1 - tx) * v00 + tx * v10) + ty * ((1 - tx) * v01 + tx * v11);
}

// -- ray casting -----------------------------------------------------------

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  int region = -1;                // -1 no hit, 0 background plane, >=1 object
  int plane_index = -1;
  Eigen::Vector3d local;          // object-frame point (objects) / world point (planes)
  Eigen::Vector3d local_normal;   // object-frame face normal (objects only)
};

bool intersect_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                   const Eigen::Vector3d& half, double* t_hit, Eigen::Vector3d* normal) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  int axis0 = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d(a)) < 1e-12) {
      if (std::abs(o(a)) > half(a)) return false;
      continue;
    }
    double ta = (-half(a) - o(a)) / d(a);
    double tb = (half(a) - o(a)) / d(a);
    if (ta > tb) std::swap(ta, tb);
    if (ta > t0) {
      t0 = ta;
      axis0 = a;
    }
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  if (t0 < 1e-9 || axis0 < 0) return false;  // inside or behind
  *t_hit = t0;
  *normal = Eigen::Vector3d::Zero();
  (*normal)(axis0) = d(axis0) > 0 ? -1.0 : 1.0;
  return true;
}

// Tangent basis for texturing a plane.
void plane_basis(const Eigen::Vector3d& n, Eigen::Vector3d* t1, Eigen::Vector3d* t2) {
  const Eigen::Vector3d up = std::abs(n.z()) < 0.9 ? Eigen::Vector3d(0, 0, 1)
                                                   : Eigen::Vector3d(1, 0, 0);
  *t1 = n.cross(up).normalized();
  *t2 = n.cross(*t1).normalized();
}

double extract_yaw(const Eigen::Matrix3d& r) { return std::atan2(r(0, 2), r(0, 0)); }

} // namespace

SceneConfig SceneConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    config_error(std::string("JSON parse failure: ") + e.what());
  }
  reject_unknown_keys(j, {"version", "seed", "width", "height", "intrinsics", "background",
                          "objects", "trajectory"},
                      "scene");
  if (j.value("version", 0) != 1) config_error("missing or unsupported version (expected 1)");

  SceneConfig s;
  s.seed = j.value("seed", std::uint64_t{0});
  s.width = j.value("width", 0);
  s.height = j.value("height", 0);
  if (s.width < 2 || s.height < 2) config_error("width/height must be >= 2");

  if (!j.contains("intrinsics")) config_error("intrinsics required");
  const json& ji = j["intrinsics"];
  reject_unknown_keys(ji, {"fx", "fy", "cx", "cy"}, "intrinsics");
  s.intrinsics = {ji.value("fx", 0.0), ji.value("fy", 0.0), ji.value("cx", 0.0),
                  ji.value("cy", 0.0)};
  if (s.intrinsics.fx <= 0 || s.intrinsics.fy <= 0) config_error("fx, fy must be positive");
  if (s.intrinsics.cx < 0 || s.intrinsics.cx > s.width - 1 || s.intrinsics.cy < 0 ||
      s.intrinsics.cy > s.height - 1)
    config_error("principal point outside image bounds");

  if (!j.contains("background") || !j["background"].is_array() || j["background"].empty())
    config_error("at least one background plane required");
  for (const json& jp : j["background"]) {
    reject_unknown_keys(jp, {"normal", "offset", "texture_seed", "texture_scale"}, "background");
    PlaneConfig p;
    p.normal = parse_vec3(jp.at("normal"), "background.normal").normalized();
    p.offset = jp.at("offset").get<double>();
    p.texture_seed = jp.value("texture_seed", std::uint64_t{0});
    p.texture_scale = jp.value("texture_scale", 1.0);
    s.background.push_back(p);
  }

  if (j.contains("objects"))
    for (const json& jo : j["objects"]) {
      reject_unknown_keys(jo, {"dims", "pose", "motion", "texture_seed"}, "objects");
      ObjectConfig o;
      o.dims = parse_vec3(jo.at("dims"), "objects.dims");
      if ((o.dims.array() <= 0).any()) config_error("object dims must be positive");
      o.initial_pose = parse_pose(jo.at("pose"), "objects.pose");
      if (jo.contains("motion")) o.per_step_motion = parse_pose(jo["motion"], "objects.motion");
      o.texture_seed = jo.value("texture_seed", std::uint64_t{1});
      s.objects.push_back(o);
    }

  if (!j.contains("trajectory") || !j["trajectory"].is_array() || j["trajectory"].empty())
    config_error("non-empty camera trajectory required");
  for (const json& jt : j["trajectory"]) s.trajectory.push_back(parse_pose(jt, "trajectory"));

  // Validity checks against the world model.
  for (const auto& cam : s.trajectory)
    for (const auto& p : s.background)
      if (std::abs(p.normal.dot(cam.translation) - p.offset) < 1e-6)
        config_error("background plane passes through a camera position");
  const SE3Pose cam0_inv = invert(s.trajectory.front());
  for (const auto& o : s.objects) {
    const double z = cam0_inv.apply(o.initial_pose.translation).z();
    if (z <= 0.5 || z >= 79) config_error("object initial depth must be in (0.5, 79)");
  }
  return s;
}

SceneConfig SceneConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("scene config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::array<double, 3> procedural_texture(std::uint64_t seed, double u, double v) {
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    double acc = 0, wsum = 0, freq = 1, w = 1;
    for (int octave = 0; octave < 4; ++octave) {
      acc += w * value_noise(seed, u * freq, v * freq, c);
      wsum += w;
      freq *= 2;
      w *= 0.5;
    }
    out[c] = 0.1 + 0.8 * std::clamp(acc / wsum, 0.0, 1.0);
  }
  return out;
}

SE3Pose object_world_pose(const ObjectConfig& obj, int time) {
  SE3Pose p = obj.initial_pose;
  for (int k = 0; k < time; ++k) p = compose(p, obj.per_step_motion);
  return p;
}

RenderedFrame render_frame(const SceneConfig& scene, int time) {
  if (time < 0 || time >= static_cast<int>(scene.trajectory.size()))
    throw std::runtime_error("render_frame: time step out of range");
  const SE3Pose& cam = scene.trajectory[time];
  const SE3Pose cam_inv = invert(cam);
  const int W = scene.width, H = scene.height;
  const Intrinsics& K = scene.intrinsics;

  // Object poses at this step, in world and camera frames.
  std::vector<SE3Pose> world_poses, cam_poses, world_inv;
  for (const auto& o : scene.objects) {
    world_poses.push_back(object_world_pose(o, time));
    cam_poses.push_back(compose(cam_inv, world_poses.back()));
    world_inv.push_back(invert(world_poses.back()));
  }

  RenderedFrame out;
  out.camera_pose = cam;
  out.image = Image(W, H, 3);
  out.depth = DepthMap(W, H);
  out.background_mask = BinaryMask(W, H, 0);
  std::vector<BinaryMask> obj_masks(scene.objects.size(), BinaryMask(W, H, 0));

  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const Eigen::Vector3d dir_cam((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const Eigen::Vector3d o = cam.translation;
      const Eigen::Vector3d d = cam.rotation * dir_cam;

      Hit hit;
      for (std::size_t pi = 0; pi < scene.background.size(); ++pi) {
        const auto& pl = scene.background[pi];
        const double denom = pl.normal.dot(d);
        if (std::abs(denom) < 1e-12) continue;
        const double t = (pl.offset - pl.normal.dot(o)) / denom;
        if (t > 1e-9 && t < hit.t) {
          hit.t = t;
          hit.region = 0;
          hit.plane_index = static_cast<int>(pi);
          hit.local = o + t * d;
        }
      }
      for (std::size_t oi = 0; oi < scene.objects.size(); ++oi) {
        const Eigen::Vector3d ol = world_inv[oi].apply(o);
        const Eigen::Vector3d dl = world_inv[oi].rotation * d;
        double t;
        Eigen::Vector3d nrm;
        if (intersect_box(ol, dl, scene.objects[oi].dims / 2, &t, &nrm) && t < hit.t) {
          hit.t = t;
          hit.region = static_cast<int>(oi) + 1;
          hit.local = ol + t * dl;
          hit.local_normal = nrm;
        }
      }
      if (hit.region < 0)
        throw std::runtime_error("render_frame: ray misses background (frustum not covered)");

      out.depth.at(x, y) = std::clamp(hit.t, 0.1, 80.0);
      std::array<double, 3> color{};
      if (hit.region == 0) {
        out.background_mask.at(x, y) = 1;
        const auto& pl = scene.background[hit.plane_index];
        Eigen::Vector3d t1, t2;
        plane_basis(pl.normal, &t1, &t2);
        color = procedural_texture(pl.texture_seed ^ scene.seed,
                                   hit.local.dot(t1) * pl.texture_scale,
                                   hit.local.dot(t2) * pl.texture_scale);
      } else {
        const int oi = hit.region - 1;
        obj_masks[oi].at(x, y) = 1;
        // texture by the two object-frame coordinates tangent to the hit face
        int dominant = 0;
        hit.local_normal.cwiseAbs().maxCoeff(&dominant);
        const int a = (dominant + 1) % 3, b = (dominant + 2) % 3;
        color = procedural_texture(scene.objects[oi].texture_seed ^ scene.seed,
                                   hit.local(a) * 4.0, hit.local(b) * 4.0);
      }
      for (int c = 0; c < 3; ++c) out.image.at(x, y, c) = color[c];
    }

  // Ground-truth detections for visible objects.
  out.detections.frame = time;
  for (std::size_t oi = 0; oi < scene.objects.size(); ++oi) {
    if (obj_masks[oi].count() == 0) continue;
    const SE3Pose& L = cam_poses[oi];
    Cuboid c;
    c.w3d = scene.objects[oi].dims.x();
    c.h3d = scene.objects[oi].dims.y();
    c.l3d = scene.objects[oi].dims.z();
    c.center = L.translation;
    c.yaw = extract_yaw(L.rotation);
    // tight 2D bounds of the projected box corners, clamped to the frame
    double umin = 1e30, umax = -1e30, vmin = 1e30, vmax = -1e30;
    const Eigen::Vector3d half = scene.objects[oi].dims / 2;
    for (int corner = 0; corner < 8; ++corner) {
      const Eigen::Vector3d p((corner & 1 ? half.x() : -half.x()),
                              (corner & 2 ? half.y() : -half.y()),
                              (corner & 4 ? half.z() : -half.z()));
      const auto px = try_project(L.apply(p), K);
      if (!px) continue;
      umin = std::min(umin, px->u);
      umax = std::max(umax, px->u);
      vmin = std::min(vmin, px->v);
      vmax = std::max(vmax, px->v);
    }
    umin = std::clamp(umin, 0.0, static_cast<double>(W - 1));
    umax = std::clamp(umax, 0.0, static_cast<double>(W - 1));
    vmin = std::clamp(vmin, 0.0, static_cast<double>(H - 1));
    vmax = std::clamp(vmax, 0.0, static_cast<double>(H - 1));
    c.x2d = umin;
    c.y2d = vmin;
    c.w2d = std::max(umax - umin, 1e-9);
    c.h2d = std::max(vmax - vmin, 1e-9);
    out.detections.cuboids.push_back(c);
    out.object_ids.push_back(static_cast<int>(oi));
    out.object_masks.push_back(std::move(obj_masks[oi]));
  }
  return out;
}

DetectionSet perturb_detections(const DetectionSet& set, double center_sigma, double dims_sigma,
                                double yaw_sigma, std::uint64_t seed) {
  if (center_sigma < 0 || dims_sigma < 0 || yaw_sigma < 0)
    throw std::invalid_argument("perturb_detections: sigmas must be non-negative");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  DetectionSet out = set;
  for (auto& c : out.cuboids) {
    for (int i = 0; i < 3; ++i) c.center(i) += center_sigma * gauss(rng);
    c.w3d += dims_sigma * gauss(rng);
    c.h3d += dims_sigma * gauss(rng);
    c.l3d += dims_sigma * gauss(rng);
    c.yaw += yaw_sigma * gauss(rng);
    // re-enforce cuboid invariants
    c.w3d = std::max(c.w3d, 1e-3);
    c.h3d = std::max(c.h3d, 1e-3);
    c.l3d = std::max(c.l3d, 1e-3);
    c.center.z() = std::max(c.center.z(), 1e-3);
    c.yaw = std::remainder(c.yaw, 2 * kPi);
    if (c.yaw <= -kPi) c.yaw += 2 * kPi;
  }
  return out;
}

} // namespace dfit
