// Command-line front end: render synthetic scenes, fit depth/pose against
// them, associate detections, and evaluate depth maps.
//
// Exit codes: 0 success, 1 usage/config error, 2 I/O error, 3 divergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "depthfit/eval.hpp"
#include "depthfit/image_io.hpp"
#include "depthfit/optim.hpp"
#include "depthfit/scene.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitIo = 2;
constexpr int kExitDiverged = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct DetectionNoise {
  double center_sigma = 0, dims_sigma = 0, yaw_sigma = 0;
};

struct ExperimentConfig {
  dfit::SceneConfig scene;
  int target_step = 0;
  std::vector<int> source_steps;
  dfit::FitConfig fit;
  DetectionNoise noise;
  // initialization
  double init_depth_const = 5.0;       // metres; used when init_depth_scale <= 0
  double init_depth_scale = 0.0;       // > 0: scale of ground-truth depth
  bool init_pose_gt = true;            // otherwise identity
  double init_pose_scale = 1.0;        // scales the ground-truth translation
};

ExperimentConfig parse_experiment(const std::string& text, const fs::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("JSON parse failure: ") + e.what());
  }
  reject_unknown(j, {"version", "scene", "target_step", "source_steps", "fit", "weights",
                     "detection_noise"},
                 "experiment");
  if (j.value("version", 0) != 1) throw ConfigError("missing or unsupported version (expected 1)");

  ExperimentConfig e;
  if (!j.contains("scene")) throw ConfigError("scene required");
  if (j["scene"].is_string()) {
    const fs::path p = base_dir / j["scene"].get<std::string>();
    e.scene = dfit::SceneConfig::from_json_file(p.string());
  } else {
    e.scene = dfit::SceneConfig::from_json_text(j["scene"].dump());
  }

  e.target_step = j.value("target_step", 0);
  if (j.contains("source_steps"))
    for (const auto& v : j["source_steps"]) e.source_steps.push_back(v.get<int>());
  if (e.source_steps.empty()) throw ConfigError("source_steps required");

  if (j.contains("weights")) {
    const json& w = j["weights"];
    reject_unknown(w, {"alpha_ssim", "lambda_smooth", "beta_scale", "num_scales"}, "weights");
    e.fit.weights.alpha_ssim = w.value("alpha_ssim", e.fit.weights.alpha_ssim);
    e.fit.weights.lambda_smooth = w.value("lambda_smooth", e.fit.weights.lambda_smooth);
    e.fit.weights.beta_scale = w.value("beta_scale", e.fit.weights.beta_scale);
    e.fit.weights.num_scales = w.value("num_scales", e.fit.weights.num_scales);
  }
  if (j.contains("fit")) {
    const json& f = j["fit"];
    reject_unknown(f,
                   {"learning_rate_depth", "learning_rate_pose", "iterations", "optimize_depth",
                    "optimize_pose", "optimize_object_translations", "use_dynamic_warp",
                    "step_halving", "eps_static", "seed", "init_depth", "init_depth_scale",
                    "init_pose", "init_pose_scale"},
                   "fit");
    e.fit.lr_depth = f.value("learning_rate_depth", e.fit.lr_depth);
    e.fit.lr_pose = f.value("learning_rate_pose", e.fit.lr_pose);
    e.fit.iterations = f.value("iterations", e.fit.iterations);
    e.fit.optimize_depth = f.value("optimize_depth", e.fit.optimize_depth);
    e.fit.optimize_pose = f.value("optimize_pose", e.fit.optimize_pose);
    e.fit.optimize_object_translations =
        f.value("optimize_object_translations", e.fit.optimize_object_translations);
    e.fit.use_dynamic_warp = f.value("use_dynamic_warp", e.fit.use_dynamic_warp);
    e.fit.step_halving = f.value("step_halving", e.fit.step_halving);
    e.fit.eps_static = f.value("eps_static", e.fit.eps_static);
    e.fit.seed = f.value("seed", e.fit.seed);
    e.init_depth_const = f.value("init_depth", e.init_depth_const);
    e.init_depth_scale = f.value("init_depth_scale", e.init_depth_scale);
    if (f.contains("init_pose")) {
      const std::string p = f["init_pose"].get<std::string>();
      if (p == "gt") e.init_pose_gt = true;
      else if (p == "identity") e.init_pose_gt = false;
      else throw ConfigError("fit.init_pose must be 'gt' or 'identity'");
    }
    e.init_pose_scale = f.value("init_pose_scale", e.init_pose_scale);
  }
  if (j.contains("detection_noise")) {
    const json& n = j["detection_noise"];
    reject_unknown(n, {"center_sigma", "dims_sigma", "yaw_sigma"}, "detection_noise");
    e.noise.center_sigma = n.value("center_sigma", 0.0);
    e.noise.dims_sigma = n.value("dims_sigma", 0.0);
    e.noise.yaw_sigma = n.value("yaw_sigma", 0.0);
  }
  if (e.fit.iterations < 0) throw ConfigError("fit.iterations must be >= 0");
  if (e.fit.lr_depth <= 0 || e.fit.lr_pose <= 0) throw ConfigError("learning rates must be > 0");
  return e;
}

// ---- render ----------------------------------------------------------------

std::string frame_tag(int step) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", step);
  return buf;
}

std::vector<std::string> write_frame(const dfit::RenderedFrame& f, int step,
                                     const fs::path& out_dir) {
  std::vector<std::string> files;
  const std::string tag = frame_tag(step);
  auto emit = [&](const std::string& name) {
    files.push_back(name);
    return (out_dir / name).string();
  };
  dfit::write_ppm(emit("frame_" + tag + ".ppm"), f.image);
  dfit::write_pfm_depth(emit("depth_" + tag + ".pfm"), f.depth);
  dfit::write_pgm(emit("mask_bg_" + tag + ".pgm"), f.background_mask);
  for (std::size_t m = 0; m < f.object_masks.size(); ++m)
    dfit::write_pgm(emit("mask_obj" + std::to_string(f.object_ids[m]) + "_" + tag + ".pgm"),
                    f.object_masks[m]);
  std::ofstream det(emit("detections_" + tag + ".csv"));
  det << dfit::detections_to_csv(f.detections);
  if (!det) throw std::runtime_error("cannot write detections CSV");
  return files;
}

int cmd_render(const std::string& config_path, const std::string& out_dir) {
  dfit::SceneConfig scene;
  try {
    scene = dfit::SceneConfig::from_json_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    fs::create_directories(out_dir);
    std::vector<std::string> manifest;
    for (int step = 0; step < static_cast<int>(scene.trajectory.size()); ++step) {
      const dfit::RenderedFrame f = dfit::render_frame(scene, step);
      auto files = write_frame(f, step, out_dir);
      manifest.insert(manifest.end(), files.begin(), files.end());
    }
    std::ofstream mf(fs::path(out_dir) / "manifest.txt");
    for (const auto& f : manifest) mf << f << "\n";
    if (!mf) throw std::runtime_error("cannot write manifest");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return 0;
}

// ---- fit -------------------------------------------------------------------

dfit::FrameSet build_frames(const ExperimentConfig& e) {
  dfit::FrameSet frames;
  frames.intrinsics = e.scene.intrinsics;
  frames.target = dfit::render_frame(e.scene, e.target_step);
  for (int s : e.source_steps) frames.sources.push_back(dfit::render_frame(e.scene, s));
  if (e.noise.center_sigma > 0 || e.noise.dims_sigma > 0 || e.noise.yaw_sigma > 0) {
    std::uint64_t k = e.fit.seed * 1000003ull + 17;
    frames.target.detections = dfit::perturb_detections(
        frames.target.detections, e.noise.center_sigma, e.noise.dims_sigma, e.noise.yaw_sigma, k);
    for (auto& src : frames.sources)
      src.detections = dfit::perturb_detections(src.detections, e.noise.center_sigma,
                                                e.noise.dims_sigma, e.noise.yaw_sigma, ++k);
  }
  return frames;
}

dfit::FitState build_initial_state(const ExperimentConfig& e, const dfit::FrameSet& frames) {
  const int w = frames.target.depth.width, h = frames.target.depth.height;
  dfit::DepthMap init(w, h);
  for (std::size_t i = 0; i < init.data.size(); ++i) {
    double d = e.init_depth_scale > 0 ? e.init_depth_scale * frames.target.depth.data[i]
                                      : e.init_depth_const;
    init.data[i] = std::clamp(d, 0.11, 79.9);
  }
  std::vector<dfit::SE3Pose> poses;
  for (const auto& src : frames.sources) {
    if (e.init_pose_gt) {
      // T_{t->s} = C_s^-1 * C_t
      dfit::SE3Pose t = dfit::compose(dfit::invert(src.camera_pose), frames.target.camera_pose);
      t.translation *= e.init_pose_scale;
      poses.push_back(t);
    } else {
      poses.push_back(dfit::SE3Pose::identity());
    }
  }
  return dfit::FitState::from_depth(init, poses,
                                    static_cast<int>(frames.target.object_masks.size()));
}

void write_report(const dfit::FitReport& report, const fs::path& out_dir, int num_scales) {
  fs::create_directories(out_dir);
  {
    std::ofstream losses(out_dir / "losses.csv");
    losses << "iteration";
    for (int l = 0; l < num_scales; ++l) losses << ",ap_" << l;
    losses << ",smooth,scale,total\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i)
      losses << report.rows[i].to_csv_row(static_cast<int>(i)) << "\n";
    if (!losses) throw std::runtime_error("cannot write losses.csv");
  }
  {
    std::ofstream sc(out_dir / "scale.csv");
    sc.precision(17);
    sc << "iteration,scale_ratio\n";
    for (std::size_t i = 0; i < report.scale_ratios.size(); ++i)
      sc << i << "," << report.scale_ratios[i] << "\n";
    if (!sc) throw std::runtime_error("cannot write scale.csv");
  }
  if (report.final_depth.width > 0)
    dfit::write_pfm_depth((out_dir / "depth_final.pfm").string(), report.final_depth);
  {
    std::ofstream poses(out_dir / "poses.txt");
    poses.precision(17);
    for (const auto& p : report.final_poses) {
      // row-major 3x4
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) poses << p.rotation(r, c) << " ";
        poses << p.translation(r) << (r == 2 ? "" : " ");
      }
      poses << "\n";
    }
    if (!poses) throw std::runtime_error("cannot write poses.txt");
  }
}

int cmd_fit(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig e;
  try {
    e = parse_experiment(slurp(config_path), fs::path(config_path).parent_path());
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  }
  try {
    const dfit::FrameSet frames = build_frames(e);
    dfit::FitState state = build_initial_state(e, frames);
    dfit::FitReport report;
    bool diverged = false;
    try {
      report = dfit::fit(std::move(state), frames, e.fit);
    } catch (dfit::FitDivergence& d) {
      report = std::move(d.partial);
      diverged = true;
    }
    write_report(report, out_dir, e.fit.weights.num_scales);
    if (diverged) {
      std::cerr << "error: loss diverged; partial report written\n";
      return kExitDiverged;
    }
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitIo;
  }
  return 0;
}

// ---- eval ------------------------------------------------------------------

int cmd_eval(const std::string& pred_path, const std::string& gt_path, double cap,
             bool median_scale, const std::string& crop) {
  try {
    const dfit::DepthMap pred = dfit::read_pfm_depth(pred_path);
    const dfit::DepthMap gt = dfit::read_pfm_depth(gt_path);
    if (pred.width != gt.width || pred.height != gt.height) {
      std::cerr << "error: size mismatch between prediction and ground truth\n";
      return kExitConfig;
    }
    dfit::CropSpec spec;
    if (crop == "none") spec = dfit::CropSpec::full();
    else if (crop != "paper") {
      std::cerr << "error: --crop must be 'paper' or 'none'\n";
      return kExitConfig;
    }
    const dfit::PixelRect region = dfit::crop_region(pred.width, pred.height, spec);
    const dfit::DepthMetrics m = dfit::compute_metrics(pred, gt, cap, region, median_scale);
    std::cout << m.to_csv_row() << "\n";
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  }
  return 0;
}

// ---- associate ---------------------------------------------------------------

int cmd_associate(const std::string& target_csv, const std::string& source_csv, double alpha,
                  double threshold) {
  try {
    const dfit::DetectionSet targets = dfit::detections_from_csv(slurp(target_csv));
    const dfit::DetectionSet sources = dfit::detections_from_csv(slurp(source_csv));
    const dfit::Association assoc = dfit::associate(targets, sources, alpha, threshold);
    std::cout << "target_index,source_index,score\n";
    std::cout.precision(17);
    for (const auto& p : assoc.pairs)
      std::cout << p.target_index << "," << p.source_index << "," << p.score << "\n";
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  }
  return 0;
}

// ---- demo-scale --------------------------------------------------------------

const char* kDefaultScaleExperiment = R"json({
  "version": 1,
  "scene": {
    "version": 1,
    "seed": 7,
    "width": 64,
    "height": 64,
    "intrinsics": {"fx": 64.0, "fy": 64.0, "cx": 31.5, "cy": 31.5},
    "background": [
      {"normal": [0.0, -0.12, 1.0], "offset": 12.0, "texture_seed": 3, "texture_scale": 2.0}
    ],
    "objects": [
      {"dims": [1.6, 1.6, 1.6], "pose": {"translation": [-2.2, 0.8, 8.0], "yaw": 0.3},
       "texture_seed": 11},
      {"dims": [1.4, 1.8, 1.4], "pose": {"translation": [2.6, -1.2, 9.0], "yaw": -0.2},
       "texture_seed": 12}
    ],
    "trajectory": [
      {"translation": [0.0, 0.0, 0.0]},
      {"translation": [0.18, 0.06, 0.35]},
      {"translation": [0.36, 0.12, 0.7]}
    ]
  },
  "target_step": 1,
  "source_steps": [0, 2],
  "weights": {"alpha_ssim": 0.85, "lambda_smooth": 0.001, "beta_scale": 0.05, "num_scales": 4},
  "fit": {
    "learning_rate_depth": 40.0,
    "learning_rate_pose": 0.002,
    "iterations": 10000,
    "optimize_depth": true,
    "optimize_pose": true,
    "step_halving": false,
    "eps_static": 50.0,
    "init_depth_scale": 0.6,
    "init_pose": "gt",
    "init_pose_scale": 0.6
  }
})json";

int cmd_demo_scale(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig e;
  try {
    if (config_path.empty())
      e = parse_experiment(kDefaultScaleExperiment, fs::current_path());
    else
      e = parse_experiment(slurp(config_path), fs::path(config_path).parent_path());
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitConfig;
  }
  try {
    const dfit::FrameSet frames = build_frames(e);
    fs::create_directories(out_dir);

    auto run = [&](double beta, const fs::path& dir) {
      ExperimentConfig run_cfg = e;
      run_cfg.fit.weights.beta_scale = beta;
      dfit::FitState state = build_initial_state(run_cfg, frames);
      const dfit::FitReport report = dfit::fit(std::move(state), frames, run_cfg.fit);
      write_report(report, dir, run_cfg.fit.weights.num_scales);
      return report.scale_ratios.back();
    };
    const double with_scale = run(e.fit.weights.beta_scale, fs::path(out_dir) / "with_scale_loss");
    const double without = run(0.0, fs::path(out_dir) / "without_scale_loss");
    std::cout << "final scale ratio with scale loss (beta=" << e.fit.weights.beta_scale
              << "): " << with_scale << "\n";
    std::cout << "final scale ratio without scale loss (beta=0): " << without << "\n";
  } catch (dfit::FitDivergence&) {
    std::cerr << "error: loss diverged\n";
    return kExitDiverged;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitIo;
  }
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised depth fitting against a synthetic scene renderer"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  auto* render = app.add_subcommand("render", "Render scene frames to PPM/PFM/PGM/CSV");
  render->add_option("--config", config_path, "scene JSON")->required();
  render->add_option("--out", out_dir, "output directory")->required();

  std::string fit_config, fit_out;
  auto* fit = app.add_subcommand("fit", "Fit depth and pose to rendered frames");
  fit->add_option("--config", fit_config, "experiment JSON")->required();
  fit->add_option("--out", fit_out, "output directory")->required();

  std::string pred_path, gt_path, crop = "paper";
  double cap = 80.0;
  bool median_scale = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a predicted depth PFM against ground truth");
  eval->add_option("pred", pred_path, "predicted depth PFM")->required();
  eval->add_option("gt", gt_path, "ground-truth depth PFM")->required();
  eval->add_option("--cap", cap, "depth cap in metres");
  eval->add_flag("--median-scale", median_scale, "median-scale the prediction first");
  eval->add_option("--crop", crop, "'paper' (default) or 'none'");

  std::string target_csv, source_csv;
  double alpha = 0.5, threshold = 0.5;
  auto* assoc = app.add_subcommand("associate", "Associate two detection CSVs");
  assoc->add_option("target", target_csv, "target detections CSV")->required();
  assoc->add_option("source", source_csv, "source detections CSV")->required();
  assoc->add_option("--alpha", alpha, "shape-score weight");
  assoc->add_option("--threshold", threshold, "minimum association score");

  std::string demo_config, demo_out = "demo_scale_out";
  auto* demo = app.add_subcommand("demo-scale", "Run the scale-recovery experiment end to end");
  demo->add_option("--config", demo_config, "experiment JSON (optional; built-in default)");
  demo->add_option("--out", demo_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  if (render->parsed()) return cmd_render(config_path, out_dir);
  if (fit->parsed()) return cmd_fit(fit_config, fit_out);
  if (eval->parsed()) return cmd_eval(pred_path, gt_path, cap, median_scale, crop);
  if (assoc->parsed()) return cmd_associate(target_csv, source_csv, alpha, threshold);
  if (demo->parsed()) return cmd_demo_scale(demo_config, demo_out);
  return kExitConfig;
}
