#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "depthfit/imaging.hpp"
#include "depthfit/scene.hpp"

using dfit::RenderedFrame;
using dfit::SceneConfig;
using dfit::SE3Pose;

namespace {

const char* kPlaneOnly = R"({
  "version": 1,
  "seed": 1,
  "width": 40,
  "height": 30,
  "intrinsics": {"fx": 40.0, "fy": 40.0, "cx": 19.5, "cy": 14.5},
  "background": [
    {"normal": [0.0, 0.0, 1.0], "offset": 10.0, "texture_seed": 5, "texture_scale": 1.0}
  ],
  "trajectory": [{"translation": [0.0, 0.0, 0.0]}]
})";

const char* kBoxScene = R"({
  "version": 1,
  "seed": 2,
  "width": 100,
  "height": 100,
  "intrinsics": {"fx": 100.0, "fy": 100.0, "cx": 50.0, "cy": 50.0},
  "background": [
    {"normal": [0.0, 0.0, 1.0], "offset": 30.0, "texture_seed": 5, "texture_scale": 1.0}
  ],
  "objects": [
    {"dims": [2.0, 2.0, 2.0], "pose": {"translation": [0.0, 0.0, 10.0]}, "texture_seed": 9}
  ],
  "trajectory": [{"translation": [0.0, 0.0, 0.0]}]
})";

const char* kTwoFrameStatic = R"({
  "version": 1,
  "seed": 3,
  "width": 64,
  "height": 64,
  "intrinsics": {"fx": 64.0, "fy": 64.0, "cx": 31.5, "cy": 31.5},
  "background": [
    {"normal": [0.0, -0.1, 1.0], "offset": 11.0, "texture_seed": 4, "texture_scale": 2.0}
  ],
  "objects": [
    {"dims": [1.8, 1.8, 1.8], "pose": {"translation": [-1.5, 0.6, 8.0], "yaw": 0.25},
     "texture_seed": 6}
  ],
  "trajectory": [
    {"translation": [0.0, 0.0, 0.0]},
    {"translation": [0.15, 0.05, 0.3], "yaw": 0.01}
  ]
})";

const char* kMovingObject = R"({
  "version": 1,
  "seed": 4,
  "width": 64,
  "height": 64,
  "intrinsics": {"fx": 64.0, "fy": 64.0, "cx": 31.5, "cy": 31.5},
  "background": [
    {"normal": [0.0, 0.0, 1.0], "offset": 14.0, "texture_seed": 4, "texture_scale": 2.0}
  ],
  "objects": [
    {"dims": [2.0, 2.0, 2.0], "pose": {"translation": [0.5, 0.0, 9.0]},
     "motion": {"translation": [0.3, 0.0, 0.0]}, "texture_seed": 6}
  ],
  "trajectory": [
    {"translation": [0.0, 0.0, 0.0]},
    {"translation": [0.05, 0.0, 0.1]}
  ]
})";

} // namespace

TEST_CASE("fronto-parallel plane renders constant depth") {
  const SceneConfig scene = SceneConfig::from_json_text(kPlaneOnly);
  const RenderedFrame f = dfit::render_frame(scene, 0);
  REQUIRE(f.depth.width == 40);
  REQUIRE(f.depth.height == 30);
  for (double d : f.depth.data) CHECK(d == doctest::Approx(10.0).epsilon(1e-12));
  for (auto m : f.background_mask.data) CHECK(m == 1);
  CHECK(f.object_masks.empty());
  CHECK(f.detections.cuboids.empty());
  for (double v : f.image.data) {
    CHECK(v >= 0.1);
    CHECK(v <= 0.9);
  }
}

TEST_CASE("ray-box intersection: front face extent and depth") {
  const SceneConfig scene = SceneConfig::from_json_text(kBoxScene);
  const RenderedFrame f = dfit::render_frame(scene, 0);
  REQUIRE(f.object_masks.size() == 1);
  const auto& mask = f.object_masks[0];

  // front face at z = 9; |x| <= 1 along the ray means |u - 50| <= 100/9
  int min_u = 1000, max_u = -1;
  for (int x = 0; x < 100; ++x)
    if (mask.at(x, 50)) {
      min_u = std::min(min_u, x);
      max_u = std::max(max_u, x);
    }
  CHECK(min_u == int(std::ceil(50 - 100.0 / 9)));
  CHECK(max_u == int(std::floor(50 + 100.0 / 9)));

  // rendered depth equals the analytic intersection with the front face
  for (int y = 45; y <= 55; ++y)
    for (int x = 45; x <= 55; ++x) {
      REQUIRE(mask.at(x, y));
      CHECK(f.depth.at(x, y) == doctest::Approx(9.0).epsilon(1e-9));
    }
  // occluded background keeps the partition property
  for (int y = 0; y < 100; ++y)
    for (int x = 0; x < 100; ++x)
      CHECK(int(mask.at(x, y)) + int(f.background_mask.at(x, y)) == 1);

  // ground-truth detection: tight projected bounds of the cube corners
  REQUIRE(f.detections.cuboids.size() == 1);
  const auto& det = f.detections.cuboids[0];
  CHECK(det.w3d == doctest::Approx(2.0));
  CHECK(det.h3d == doctest::Approx(2.0));
  CHECK(det.l3d == doctest::Approx(2.0));
  CHECK((det.center - Eigen::Vector3d(0, 0, 10)).norm() < 1e-12);
  CHECK(det.yaw == doctest::Approx(0.0));
  CHECK(det.x2d == doctest::Approx(50 - 100.0 / 9).epsilon(1e-9));
  CHECK(det.w2d == doctest::Approx(2 * 100.0 / 9).epsilon(1e-9));
}

TEST_CASE("procedural texture is deterministic, bounded, and seed-sensitive") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  int differing = 0;
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng), y = u(rng);
    const auto a = dfit::procedural_texture(123, x, y);
    const auto b = dfit::procedural_texture(123, x, y);
    const auto c = dfit::procedural_texture(456, x, y);
    for (int ch = 0; ch < 3; ++ch) {
      CHECK(a[ch] == b[ch]);
      CHECK(a[ch] >= 0.1);
      CHECK(a[ch] <= 0.9);
    }
    if (std::abs(a[0] - c[0]) > 1e-3) ++differing;
  }
  CHECK(differing > 5000);
}

TEST_CASE("renders are bit-identical across runs") {
  const SceneConfig scene = SceneConfig::from_json_text(kTwoFrameStatic);
  const RenderedFrame a = dfit::render_frame(scene, 1);
  const RenderedFrame b = dfit::render_frame(scene, 1);
  CHECK(a.image.data == b.image.data);
  CHECK(a.depth.data == b.depth.data);
  CHECK(a.background_mask.data == b.background_mask.data);
  REQUIRE(a.object_masks.size() == b.object_masks.size());
  for (std::size_t i = 0; i < a.object_masks.size(); ++i)
    CHECK(a.object_masks[i].data == b.object_masks[i].data);
}

TEST_CASE("static warp against rendered ground truth reproduces the target") {
  const SceneConfig scene = SceneConfig::from_json_text(kTwoFrameStatic);
  const RenderedFrame target = dfit::render_frame(scene, 0);
  const RenderedFrame source = dfit::render_frame(scene, 1);
  const SE3Pose t_ts = dfit::compose(dfit::invert(source.camera_pose), target.camera_pose);

  double err = 0;
  int count = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (!target.background_mask.at(x, y)) continue;
      const auto q = dfit::warp_static({double(x), double(y)}, target.depth.at(x, y),
                                       scene.intrinsics, t_ts);
      const auto s = dfit::bilinear_sample(source.image, q);
      if (s.out_of_bounds) continue;
      for (int c = 0; c < 3; ++c) err += std::abs(s.value[c] - target.image.at(x, y, c));
      count += 3;
    }
  REQUIRE(count > 3000);
  CHECK(err / count < 0.02);
}

TEST_CASE("dynamic warp with ground-truth object poses reproduces object pixels") {
  const SceneConfig scene = SceneConfig::from_json_text(kMovingObject);
  const RenderedFrame target = dfit::render_frame(scene, 0);
  const RenderedFrame source = dfit::render_frame(scene, 1);
  REQUIRE(target.object_masks.size() == 1);
  REQUIRE(source.detections.cuboids.size() == 1);

  // camera-frame object poses straight from the ground-truth detections
  const SE3Pose l_t = dfit::pose_from_cuboid(target.detections.cuboids[0]);
  const SE3Pose l_s = dfit::pose_from_cuboid(source.detections.cuboids[0]);

  double err = 0;
  int count = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (!target.object_masks[0].at(x, y)) continue;
      const auto q = dfit::warp_dynamic({double(x), double(y)}, target.depth.at(x, y),
                                        scene.intrinsics, l_s, l_t);
      const auto s = dfit::bilinear_sample(source.image, q);
      if (s.out_of_bounds) continue;
      for (int c = 0; c < 3; ++c) err += std::abs(s.value[c] - target.image.at(x, y, c));
      count += 3;
    }
  REQUIRE(count > 100);
  CHECK(err / count < 0.02);

  // the static warp, by contrast, misses badly on the moving object
  const SE3Pose t_ts = dfit::compose(dfit::invert(source.camera_pose), target.camera_pose);
  double static_err = 0;
  int static_count = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (!target.object_masks[0].at(x, y)) continue;
      const auto q = dfit::warp_static({double(x), double(y)}, target.depth.at(x, y),
                                       scene.intrinsics, t_ts);
      const auto s = dfit::bilinear_sample(source.image, q);
      if (s.out_of_bounds) continue;
      for (int c = 0; c < 3; ++c) static_err += std::abs(s.value[c] - target.image.at(x, y, c));
      static_count += 3;
    }
  CHECK(static_err / static_count > 5 * (err / count));
}

TEST_CASE("object world pose advances by V each step") {
  dfit::ObjectConfig obj;
  obj.initial_pose = SE3Pose::from_yaw(0.3, {1, 0, 10});
  obj.per_step_motion = SE3Pose::from_yaw(0.05, {0.2, 0, 0.1});
  SE3Pose expected = obj.initial_pose;
  for (int k = 0; k < 4; ++k) {
    const SE3Pose got = dfit::object_world_pose(obj, k);
    CHECK((got.rotation - expected.rotation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((got.translation - expected.translation).cwiseAbs().maxCoeff() < 1e-12);
    expected = dfit::compose(expected, obj.per_step_motion);
  }
}

TEST_CASE("perturb_detections: identity, determinism, noise statistics") {
  dfit::DetectionSet set;
  for (int i = 0; i < 100; ++i) {
    dfit::Cuboid c;
    c.x2d = 10;
    c.y2d = 10;
    c.w2d = 5;
    c.h2d = 5;
    c.w3d = 1.5;
    c.h3d = 1.5;
    c.l3d = 3.0;
    c.center = {double(i % 10), 0.0, 10.0 + i / 10};
    c.yaw = 0.1;
    set.cuboids.push_back(c);
  }

  const auto same = dfit::perturb_detections(set, 0, 0, 0, 99);
  for (std::size_t i = 0; i < set.cuboids.size(); ++i)
    CHECK((same.cuboids[i].center - set.cuboids[i].center).norm() == 0.0);

  const auto a = dfit::perturb_detections(set, 0.2, 0.05, 0.01, 42);
  const auto b = dfit::perturb_detections(set, 0.2, 0.05, 0.01, 42);
  const auto c = dfit::perturb_detections(set, 0.2, 0.05, 0.01, 43);
  bool any_diff = false;
  for (std::size_t i = 0; i < set.cuboids.size(); ++i) {
    CHECK((a.cuboids[i].center - b.cuboids[i].center).norm() == 0.0);
    if ((a.cuboids[i].center - c.cuboids[i].center).norm() > 1e-12) any_diff = true;
  }
  CHECK(any_diff);

  // empirical std of the injected center noise over 10^4 draws
  double sum = 0, sum_sq = 0;
  int n = 0;
  for (std::uint64_t seed = 0; seed < 34; ++seed) {
    const auto pert = dfit::perturb_detections(set, 0.2, 0, 0, 1000 + seed);
    for (std::size_t i = 0; i < set.cuboids.size(); ++i) {
      const Eigen::Vector3d d = pert.cuboids[i].center - set.cuboids[i].center;
      for (int k = 0; k < 3; ++k) {
        sum += d[k];
        sum_sq += d[k] * d[k];
        ++n;
      }
    }
  }
  REQUIRE(n >= 10000);
  const double mean = sum / n;
  const double std_dev = std::sqrt(sum_sq / n - mean * mean);
  CHECK(std_dev == doctest::Approx(0.2).epsilon(0.10));
}

TEST_CASE("scene config validation") {
  CHECK_THROWS(SceneConfig::from_json_text("{\"version\": 2}"));
  CHECK_THROWS(SceneConfig::from_json_text("not json"));
  // unknown key
  std::string cfg = kPlaneOnly;
  cfg.insert(cfg.rfind('}'), ", \"typo_key\": 1");
  CHECK_THROWS(SceneConfig::from_json_text(cfg));
  // plane through the camera origin
  std::string bad_plane = kPlaneOnly;
  const auto pos = bad_plane.find("\"offset\": 10.0");
  bad_plane.replace(pos, 14, "\"offset\": 0.0");
  CHECK_THROWS(SceneConfig::from_json_text(bad_plane));
  // object too deep
  std::string deep = kBoxScene;
  deep.replace(deep.find("[0.0, 0.0, 10.0]"), 16, "[0.0, 0.0, 99.0]");
  CHECK_THROWS(SceneConfig::from_json_text(deep));

  // a vertical plane cannot cover the frustum: rendering must fail loudly
  const char* sideways = R"({
    "version": 1, "seed": 1, "width": 16, "height": 16,
    "intrinsics": {"fx": 16.0, "fy": 16.0, "cx": 7.5, "cy": 7.5},
    "background": [{"normal": [1.0, 0.0, 0.0], "offset": 5.0}],
    "trajectory": [{"translation": [0.0, 0.0, 0.0]}]
  })";
  const SceneConfig s = SceneConfig::from_json_text(sideways);
  CHECK_THROWS(dfit::render_frame(s, 0));
  // out-of-range step
  const SceneConfig ok = SceneConfig::from_json_text(kPlaneOnly);
  CHECK_THROWS(dfit::render_frame(ok, 5));
}
