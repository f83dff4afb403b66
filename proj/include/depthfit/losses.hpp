#pragma once

#include <string>
#include <vector>

#include "depthfit/geometry.hpp"
#include "depthfit/imaging.hpp"

namespace dfit {

struct LossWeights {
  double alpha_ssim = 0.85;    // SSIM vs L1 balance in pe
  double lambda_smooth = 1e-3; // smoothness weight
  double beta_scale = 0.05;    // scale-loss weight
  int num_scales = 4;
};

struct LossBreakdown {
  std::vector<double> appearance_per_scale;
  double smoothness = 0;
  double scale = 0;
  double total = 0;

  double photometric(double lambda_smooth) const;
  /// "iteration, ap_0..ap_{L-1}, smooth, scale, total"
  std::string to_csv_row(int iteration) const;
};

/// Per-pixel SSIM with a 3x3 uniform window, reflect padding,
/// C1 = 0.01^2, C2 = 0.03^2 on [0,1] images. Same channel count as inputs.
Image ssim_map(const Image& a, const Image& b);

/// Per-pixel photometric error: (alpha/2)(1 - SSIM) + (1-alpha)|a-b|,
/// channel-averaged. Single-channel output.
Image pe(const Image& target, const Image& recon, const LossWeights& w);

/// Adjoint of pe w.r.t. the reconstruction: given dL/dpe per pixel, returns
/// dL/drecon (same shape as recon). Subgradient sign(0) = 0 for the L1 term.
Image pe_backward(const Image& target, const Image& recon, const LossWeights& w,
                  const Image& dl_dpe);

/// Per-pixel minimum of pe over source reconstructions, then mean over pixels
/// valid in at least one view. `invalid[s]` flags pixels excluded from view s.
double appearance_loss(const Image& target, const std::vector<Image>& recons,
                       const std::vector<BinaryMask>& invalid, const LossWeights& w);

/// Per-pixel min machinery shared with the optimizer: writes the selected
/// source index per pixel (-1 when invalid everywhere) and returns the mean.
double appearance_min(const std::vector<Image>& pe_maps,
                      const std::vector<BinaryMask>& invalid, std::vector<int>& argmin_out);

/// Edge-aware smoothness on mean-normalized depth.
double smoothness_loss(const DepthMap& depth, const Image& img);
/// Gradient of smoothness_loss w.r.t. every depth value.
std::vector<double> smoothness_backward(const DepthMap& depth, const Image& img);

struct PosePair {
  SE3Pose l_s, l_t;
};

/// L1 norm of tran(T) - mean_i tran(L_s^i * L_t^i^-1); 0 when pairs is empty.
double scale_loss(const SE3Pose& t_ts, const std::vector<PosePair>& static_pairs);

/// Multi-scale photometric objective: lambda * smoothness + sum_l appearance_l.
/// `recons[s]` and `invalid[s]` hold one entry per scale for source s.
LossBreakdown photometric_loss(const ImagePyramid& target,
                               const std::vector<ImagePyramid>& recons,
                               const std::vector<std::vector<BinaryMask>>& invalid,
                               const DepthMap& full_res_depth, const LossWeights& w);

/// total = photometric + beta * scale.
LossBreakdown final_loss(const LossBreakdown& photo, double scale, const LossWeights& w);

} // namespace dfit
