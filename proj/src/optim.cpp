#include "depthfit/optim.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "depthfit/eval.hpp"

namespace dfit {

namespace {

constexpr double kDepthMin = 0.1;
constexpr double kDepthMax = 80.0;
constexpr double kSquashA = 1.0 / kDepthMin - 1.0 / kDepthMax;
constexpr double kSquashB = 1.0 / kDepthMax;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

} // namespace

double disp_to_depth(double raw) { return 1.0 / (kSquashA * sigmoid(raw) + kSquashB); }

double disp_to_depth_grad(double raw) {
  const double s = sigmoid(raw);
  const double d = 1.0 / (kSquashA * s + kSquashB);
  return -kSquashA * s * (1.0 - s) * d * d;
}

double depth_to_disp(double depth) {
  if (!(depth > kDepthMin && depth < kDepthMax))
    throw std::domain_error("depth_to_disp: depth outside (0.1, 80)");
  const double s = (1.0 / depth - kSquashB) / kSquashA;
  return std::log(s / (1.0 - s));
}

Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    xp(i) = x(i) + h;
    const double fp = f(xp);
    xp(i) = x(i) - h;
    const double fm = f(xp);
    xp(i) = x(i);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("numeric_gradient: non-finite evaluation");
    g(i) = (fp - fm) / (2 * h);
  }
  return g;
}

SE3Pose PoseParams::to_pose() const {
  return {axis_angle_to_matrix(axis_angle), translation};
}

PoseParams PoseParams::from_pose(const SE3Pose& p) {
  return {matrix_to_axis_angle(p.rotation), p.translation};
}

DepthMap FitState::depth() const {
  DepthMap d(width, height);
  for (Eigen::Index i = 0; i < raw_disp.size(); ++i) d.data[i] = disp_to_depth(raw_disp(i));
  return d;
}

FitState FitState::from_depth(const DepthMap& d, const std::vector<SE3Pose>& poses_ts,
                              int num_target_objects) {
  FitState s;
  s.width = d.width;
  s.height = d.height;
  s.raw_disp.resize(static_cast<Eigen::Index>(d.data.size()));
  for (Eigen::Index i = 0; i < s.raw_disp.size(); ++i) s.raw_disp(i) = depth_to_disp(d.data[i]);
  for (const auto& p : poses_ts) s.poses.push_back(PoseParams::from_pose(p));
  s.object_t_offsets.assign(poses_ts.size(),
                            std::vector<Eigen::Vector3d>(num_target_objects,
                                                         Eigen::Vector3d::Zero()));
  return s;
}

namespace {

// Per-region rigid transform applied before re-projection at one level.
struct RegionTransform {
  Eigen::Matrix3d r;
  Eigen::Vector3d t;
  bool uses_pose = false;    // true -> gradient flows to the camera pose
  int object_index = -1;     // >= 0 -> gradient flows to that object offset
};

struct PixelCache {
  Eigen::Vector3d x;         // transformed camera-frame point
  double u = 0, v = 0;       // warped source coordinates
  std::uint8_t has_sample = 0;
  std::uint8_t excluded = 0; // invalid for loss purposes
  std::int16_t region = 0;
};

struct SourceLevel {
  Image recon;
  Image pe_map;
  BinaryMask invalid;
  std::vector<PixelCache> cache;
};

} // namespace

LossBreakdown evaluate_objective(const FitState& state, const FrameSet& frames,
                                 const FitConfig& cfg, Gradients* grads,
                                 const std::vector<BinaryMask>* drop, WarpProbe* probe) {
  const int W = frames.target.image.width, H = frames.target.image.height;
  if (state.width != W || state.height != H)
    throw std::invalid_argument("evaluate_objective: state/frame size mismatch");
  const int S = static_cast<int>(frames.sources.size());
  if (S == 0) throw std::invalid_argument("evaluate_objective: at least one source required");
  if (static_cast<int>(state.poses.size()) != S)
    throw std::invalid_argument("evaluate_objective: one pose per source required");
  const int L = cfg.weights.num_scales;
  const int M = static_cast<int>(frames.target.object_masks.size());

  // region label map, level 0: 0 background, 1..M objects
  std::vector<std::vector<std::int16_t>> labels(L);
  {
    std::vector<std::int16_t> l0(static_cast<std::size_t>(W) * H, -1);
    for (std::size_t i = 0; i < l0.size(); ++i)
      if (frames.target.background_mask.data[i]) l0[i] = 0;
    for (int j = 0; j < M; ++j)
      for (std::size_t i = 0; i < l0.size(); ++i)
        if (frames.target.object_masks[j].data[i]) {
          if (l0[i] != -1) throw std::invalid_argument("evaluate_objective: masks overlap");
          l0[i] = static_cast<std::int16_t>(j + 1);
        }
    for (auto v : l0)
      if (v == -1) throw std::invalid_argument("evaluate_objective: masks do not cover frame");
    labels[0] = std::move(l0);
    int w = W, h = H;
    for (int l = 1; l < L; ++l) {
      const int w2 = w / 2, h2 = h / 2;
      std::vector<std::int16_t> lv(static_cast<std::size_t>(w2) * h2);
      for (int y = 0; y < h2; ++y)
        for (int x = 0; x < w2; ++x)
          lv[static_cast<std::size_t>(y) * w2 + x] =
              labels[l - 1][static_cast<std::size_t>(2 * y) * w + 2 * x];
      labels[l] = std::move(lv);
      w = w2;
      h = h2;
    }
  }

  std::vector<Intrinsics> K(L);
  K[0] = frames.intrinsics;
  for (int l = 1; l < L; ++l) K[l] = K[l - 1].halved();

  const ImagePyramid target_pyr = build_pyramid(frames.target.image, L);
  std::vector<ImagePyramid> source_pyrs;
  for (const auto& s : frames.sources) source_pyrs.push_back(build_pyramid(s.image, L));

  // current depth and its pyramid
  DepthMap depth0 = state.depth();
  std::vector<DepthMap> depth_pyr{depth0};
  for (int l = 1; l < L; ++l) depth_pyr.push_back(downsample(depth_pyr.back()));

  // Associate detections and classify motion per source; build region
  // transforms and the static pairs for the scale loss.
  std::vector<SE3Pose> t_poses;
  for (const auto& p : state.poses) t_poses.push_back(p.to_pose());

  std::vector<std::vector<RegionTransform>> regions(S);  // [source][region 0..M]
  std::vector<std::vector<PosePair>> static_pairs(S);
  std::vector<std::vector<int>> static_pair_object(S);  // target object per static pair
  for (int s = 0; s < S; ++s) {
    const Association assoc = associate(frames.target.detections, frames.sources[s].detections,
                                        cfg.assoc_alpha, cfg.assoc_threshold);
    std::vector<int> match(M, -1);
    for (const auto& pr : assoc.pairs) match[pr.target_index] = pr.source_index;

    regions[s].resize(M + 1);
    regions[s][0] = {t_poses[s].rotation, t_poses[s].translation, true, -1};
    for (int j = 0; j < M; ++j) {
      RegionTransform rt{t_poses[s].rotation, t_poses[s].translation, true, -1};
      if (match[j] >= 0 && cfg.use_dynamic_warp) {
        const SE3Pose l_t = pose_from_cuboid(frames.target.detections.cuboids[j]);
        SE3Pose l_s = pose_from_cuboid(frames.sources[s].detections.cuboids[match[j]]);
        if (cfg.optimize_object_translations &&
            static_cast<int>(state.object_t_offsets.size()) > s &&
            static_cast<int>(state.object_t_offsets[s].size()) > j)
          l_s.translation += state.object_t_offsets[s][j];
        const SE3Pose m = compose(l_s, invert(l_t));
        rt = {m.rotation, m.translation, false,
              cfg.optimize_object_translations ? j : -1};
      }
      regions[s][j + 1] = rt;
      if (match[j] >= 0) {
        const SE3Pose l_t = pose_from_cuboid(frames.target.detections.cuboids[j]);
        SE3Pose l_s = pose_from_cuboid(frames.sources[s].detections.cuboids[match[j]]);
        if (cfg.optimize_object_translations &&
            static_cast<int>(state.object_t_offsets.size()) > s &&
            static_cast<int>(state.object_t_offsets[s].size()) > j)
          l_s.translation += state.object_t_offsets[s][j];
        const MotionLabel ml =
            classify_motion(j, l_s, l_t, t_poses[s], depth0, frames.intrinsics,
                            frames.target.object_masks[j], cfg.eps_static);
        if (ml.is_static) {
          static_pairs[s].push_back({l_s, l_t});
          static_pair_object[s].push_back(j);
        }
      }
    }
  }

  double scale_term = 0;
  for (int s = 0; s < S; ++s) scale_term += scale_loss(t_poses[s], static_pairs[s]);
  scale_term /= static_cast<double>(S);

  if (drop && static_cast<int>(drop->size()) != L)
    throw std::invalid_argument("evaluate_objective: one drop mask per scale required");
  if (probe) {
    probe->u.assign(S, {});
    probe->v.assign(S, {});
    probe->pe.assign(S, {});
    probe->recon.assign(S, {});
  }

  // forward pass: warp, synthesize, pe per (source, level)
  std::vector<std::vector<SourceLevel>> sl(S, std::vector<SourceLevel>(L));
  for (int s = 0; s < S; ++s)
    for (int l = 0; l < L; ++l) {
      const Image& tgt = target_pyr.levels[l];
      const Image& src = source_pyrs[s].levels[l];
      const int w = tgt.width, h = tgt.height;
      SourceLevel& out = sl[s][l];
      out.recon = Image(w, h, tgt.channels);
      out.invalid = BinaryMask(w, h, 0);
      out.cache.resize(static_cast<std::size_t>(w) * h);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          PixelCache& pc = out.cache[i];
          pc.region = labels[l][i];
          const RegionTransform& rt = regions[s][pc.region];
          const double d = depth_pyr[l].data[i];
          const Eigen::Vector3d dir((x - K[l].cx) / K[l].fx, (y - K[l].cy) / K[l].fy, 1.0);
          const Eigen::Vector3d X = rt.r * (d * dir) + rt.t;
          pc.x = X;
          if (X.z() <= 1e-9) {
            pc.has_sample = 0;
            pc.excluded = 1;
            out.invalid.at(x, y) = 1;
            // constant fill: copy the target pixel so pe and its gradient vanish
            for (int c = 0; c < tgt.channels; ++c) out.recon.at(x, y, c) = tgt.at(x, y, c);
            continue;
          }
          pc.u = K[l].fx * X.x() / X.z() + K[l].cx;
          pc.v = K[l].fy * X.y() / X.z() + K[l].cy;
          pc.has_sample = 1;
          const SampleResult sr = bilinear_sample(src, {pc.u, pc.v});
          for (int c = 0; c < tgt.channels; ++c) out.recon.at(x, y, c) = sr.value[c];
          if (sr.out_of_bounds) {
            pc.excluded = 1;
            out.invalid.at(x, y) = 1;
          }
        }
      if (drop)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            if ((*drop)[l].at(x, y)) out.invalid.at(x, y) = 1;
      out.pe_map = pe(tgt, out.recon, cfg.weights);
      if (probe) {
        DepthMap pu(w, h, std::numeric_limits<double>::quiet_NaN()), pv = pu;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const PixelCache& pc = out.cache[static_cast<std::size_t>(y) * w + x];
            if (pc.has_sample) {
              pu.at(x, y) = pc.u;
              pv.at(x, y) = pc.v;
            }
          }
        probe->u[s].push_back(std::move(pu));
        probe->v[s].push_back(std::move(pv));
        probe->pe[s].push_back(out.pe_map);
        probe->recon[s].push_back(out.recon);
      }
    }

  LossBreakdown bd;
  std::vector<std::vector<int>> argmin(L);
  std::vector<std::size_t> valid_count(L);
  for (int l = 0; l < L; ++l) {
    std::vector<Image> pe_maps;
    std::vector<BinaryMask> inv;
    for (int s = 0; s < S; ++s) {
      pe_maps.push_back(sl[s][l].pe_map);
      inv.push_back(sl[s][l].invalid);
    }
    bd.appearance_per_scale.push_back(appearance_min(pe_maps, inv, argmin[l]));
    valid_count[l] = 0;
    for (int a : argmin[l])
      if (a >= 0) ++valid_count[l];
  }
  bd.smoothness = smoothness_loss(depth0, frames.target.image);
  bd.scale = scale_term;
  bd.total = bd.photometric(cfg.weights.lambda_smooth) + cfg.weights.beta_scale * scale_term;

  if (!grads) return bd;

  // ---- backward pass ----
  grads->raw_disp = Eigen::VectorXd::Zero(state.raw_disp.size());
  grads->pose.assign(S, Eigen::Matrix<double, 6, 1>::Zero());
  grads->object_t.assign(S, std::vector<Eigen::Vector3d>(M, Eigen::Vector3d::Zero()));

  std::vector<std::vector<double>> grad_depth(L);
  for (int l = 0; l < L; ++l)
    grad_depth[l].assign(static_cast<std::size_t>(depth_pyr[l].width) * depth_pyr[l].height, 0.0);

  std::vector<std::array<Eigen::Matrix3d, 3>> rot_jac;
  for (int s = 0; s < S; ++s) rot_jac.push_back(axis_angle_jacobians(state.poses[s].axis_angle));

  for (int l = 0; l < L; ++l) {
    const Image& tgt = target_pyr.levels[l];
    const int w = tgt.width, h = tgt.height;
    const double inv_count = 1.0 / static_cast<double>(valid_count[l]);
    for (int s = 0; s < S; ++s) {
      SourceLevel& cur = sl[s][l];
      Image dl_dpe(w, h, 1);
      bool any = false;
      for (std::size_t i = 0; i < dl_dpe.data.size(); ++i)
        if (argmin[l][i] == s) {
          dl_dpe.data[i] = inv_count;
          any = true;
        }
      if (!any) continue;
      const Image dl_drecon = pe_backward(tgt, cur.recon, cfg.weights, dl_dpe);
      const Image& src = source_pyrs[s].levels[l];
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const std::size_t i = static_cast<std::size_t>(y) * w + x;
          const PixelCache& pc = cur.cache[i];
          if (!pc.has_sample) continue;
          const SampleGrad sg = bilinear_sample_grad(src, {pc.u, pc.v});
          double gu = 0, gv = 0;
          for (int c = 0; c < tgt.channels; ++c) {
            gu += dl_drecon.at(x, y, c) * sg.du[c];
            gv += dl_drecon.at(x, y, c) * sg.dv[c];
          }
          if (gu == 0 && gv == 0) continue;
          const Eigen::Vector3d& X = pc.x;
          const double iz = 1.0 / X.z();
          const Eigen::Vector3d dl_dx(K[l].fx * iz * gu, K[l].fy * iz * gv,
                                      -(K[l].fx * X.x() * gu + K[l].fy * X.y() * gv) * iz * iz);
          const RegionTransform& rt = regions[s][pc.region];
          const Eigen::Vector3d dir((x - K[l].cx) / K[l].fx, (y - K[l].cy) / K[l].fy, 1.0);
          grad_depth[l][i] += dl_dx.dot(rt.r * dir);
          if (rt.uses_pose) {
            const double d = depth_pyr[l].data[i];
            const Eigen::Vector3d P = d * dir;
            for (int k = 0; k < 3; ++k)
              grads->pose[s](k) += dl_dx.dot(rot_jac[s][k] * P);
            grads->pose[s].tail<3>() += dl_dx;
          } else if (rt.object_index >= 0) {
            grads->object_t[s][rt.object_index] += dl_dx;
          }
        }
    }
  }

  // collapse the depth-pyramid gradients to level 0 (adjoint of box downsample)
  for (int l = L - 1; l >= 1; --l) {
    const int wc = depth_pyr[l].width, hc = depth_pyr[l].height;
    const int wf = depth_pyr[l - 1].width;
    for (int y = 0; y < hc; ++y)
      for (int x = 0; x < wc; ++x) {
        const double g = grad_depth[l][static_cast<std::size_t>(y) * wc + x] * 0.25;
        grad_depth[l - 1][static_cast<std::size_t>(2 * y) * wf + 2 * x] += g;
        grad_depth[l - 1][static_cast<std::size_t>(2 * y) * wf + 2 * x + 1] += g;
        grad_depth[l - 1][static_cast<std::size_t>(2 * y + 1) * wf + 2 * x] += g;
        grad_depth[l - 1][static_cast<std::size_t>(2 * y + 1) * wf + 2 * x + 1] += g;
      }
  }

  const std::vector<double> g_sm = smoothness_backward(depth0, frames.target.image);
  for (std::size_t i = 0; i < g_sm.size(); ++i)
    grad_depth[0][i] += cfg.weights.lambda_smooth * g_sm[i];

  for (Eigen::Index i = 0; i < grads->raw_disp.size(); ++i)
    grads->raw_disp(i) = grad_depth[0][i] * disp_to_depth_grad(state.raw_disp(i));

  // scale-loss gradient (translation only)
  const double beta_per_source = cfg.weights.beta_scale / static_cast<double>(S);
  for (int s = 0; s < S; ++s) {
    if (static_pairs[s].empty()) continue;
    Eigen::Vector3d avg = Eigen::Vector3d::Zero();
    for (const auto& p : static_pairs[s]) avg += compose(p.l_s, invert(p.l_t)).translation;
    const double n = static_cast<double>(static_pairs[s].size());
    avg /= n;
    const Eigen::Vector3d diff = t_poses[s].translation - avg;
    const Eigen::Vector3d sign_vec(sgn(diff.x()), sgn(diff.y()), sgn(diff.z()));
    grads->pose[s].tail<3>() += beta_per_source * sign_vec;
    if (cfg.optimize_object_translations)
      for (std::size_t p = 0; p < static_pairs[s].size(); ++p)
        grads->object_t[s][static_pair_object[s][p]] -= beta_per_source / n * sign_vec;
  }

  // frozen parameter groups report exactly zero gradient
  if (!cfg.optimize_depth) grads->raw_disp.setZero();
  if (!cfg.optimize_pose)
    for (auto& p : grads->pose) p.setZero();
  if (!cfg.optimize_object_translations)
    for (auto& per_source : grads->object_t)
      for (auto& v : per_source) v.setZero();

  return bd;
}

FitReport fit(FitState state, const FrameSet& frames, const FitConfig& cfg) {
  const auto t_start = std::chrono::steady_clock::now();
  const PixelRect full{0, frames.target.depth.width, 0, frames.target.depth.height};
  const std::size_t num_objects = frames.target.object_masks.size();
  if (state.object_t_offsets.size() != state.poses.size() ||
      (!state.object_t_offsets.empty() && state.object_t_offsets[0].size() != num_objects))
    state.object_t_offsets.assign(
        state.poses.size(), std::vector<Eigen::Vector3d>(num_objects, Eigen::Vector3d::Zero()));

  FitReport report;
  auto record = [&](const LossBreakdown& bd) {
    report.rows.push_back(bd);
    report.scale_ratios.push_back(scale_ratio(state.depth(), frames.target.depth, full));
  };
  auto finish = [&]() {
    report.final_depth = state.depth();
    report.final_poses.clear();
    for (const auto& p : state.poses) report.final_poses.push_back(p.to_pose());
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  };

  Gradients g;
  LossBreakdown bd = evaluate_objective(state, frames, cfg, &g);
  record(bd);

  double lr_depth = cfg.lr_depth, lr_pose = cfg.lr_pose;
  for (int iter = 1; iter <= cfg.iterations; ++iter) {
    FitState cand = state;
    cand.raw_disp -= lr_depth * g.raw_disp;
    for (std::size_t s = 0; s < cand.poses.size(); ++s) {
      cand.poses[s].axis_angle -= lr_pose * g.pose[s].head<3>();
      cand.poses[s].translation -= lr_pose * g.pose[s].tail<3>();
      // re-wrap when the axis-angle norm leaves the principal interval
      const double th = cand.poses[s].axis_angle.norm();
      if (th >= M_PI)
        cand.poses[s].axis_angle *= (th - 2 * M_PI) / th;
      for (std::size_t j = 0; j < cand.object_t_offsets[s].size(); ++j)
        cand.object_t_offsets[s][j] -= lr_pose * g.object_t[s][j];
    }

    Gradients g2;
    LossBreakdown bd2;
    bool candidate_bad = false;
    try {
      bd2 = evaluate_objective(cand, frames, cfg, &g2);
    } catch (const std::runtime_error&) {
      // a step so large that no pixel warps anywhere valid
      candidate_bad = true;
    }
    if (candidate_bad || !std::isfinite(bd2.total)) {
      if (cfg.step_halving) {
        lr_depth /= 2;
        lr_pose /= 2;
        record(bd);
        continue;
      }
      report.diverged = true;
      finish();
      throw FitDivergence(std::move(report));
    }
    if (cfg.step_halving && bd2.total > bd.total) {
      lr_depth /= 2;
      lr_pose /= 2;
      record(bd);  // state unchanged this iteration
    } else {
      state = std::move(cand);
      bd = bd2;
      g = std::move(g2);
      record(bd);
    }
  }
  finish();
  return report;
}

} // namespace dfit
