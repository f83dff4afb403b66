#include "depthfit/losses.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "depthfit/kernels.hpp"

namespace dfit {

namespace {

constexpr double kC1 = 1e-4;  // 0.01^2
constexpr double kC2 = 9e-4;  // 0.03^2

int reflect(int i, int n) {
  if (i < 0) return -i - 1;
  if (i >= n) return 2 * n - 1 - i;
  return i;
}

// 3x3 uniform mean filter with reflect padding, one channel plane.
void box3(const std::vector<double>& in, std::vector<double>& out, int w, int h) {
  out.assign(in.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          s += in[static_cast<std::size_t>(reflect(y + dy, h)) * w + reflect(x + dx, w)];
      out[static_cast<std::size_t>(y) * w + x] = s / 9.0;
    }
}

// Adjoint of box3: scatter each output weight back to its padded source.
void box3_adjoint(const std::vector<double>& in, std::vector<double>& out, int w, int h) {
  out.assign(in.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = in[static_cast<std::size_t>(y) * w + x] / 9.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          out[static_cast<std::size_t>(reflect(y + dy, h)) * w + reflect(x + dx, w)] += v;
    }
}

void extract_channel(const Image& img, int c, std::vector<double>& out) {
  out.resize(static_cast<std::size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      out[static_cast<std::size_t>(y) * img.width + x] = img.at(x, y, c);
}

void check_same_shape(const Image& a, const Image& b, const char* who) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    throw std::invalid_argument(std::string(who) + ": image dimension mismatch");
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

struct SsimPlanes {
  std::vector<double> ma, mb, sa2, sb2, sab;  // means, variances, covariance
};

SsimPlanes ssim_planes(const std::vector<double>& a, const std::vector<double>& b, int w, int h) {
  const std::size_t n = a.size();
  SsimPlanes p;
  box3(a, p.ma, w, h);
  box3(b, p.mb, w, h);
  std::vector<double> tmp(n), filt;
  const auto& k = kernels::active();
  k.mul(tmp.data(), a.data(), a.data(), n);
  box3(tmp, p.sa2, w, h);
  k.mul(tmp.data(), b.data(), b.data(), n);
  box3(tmp, p.sb2, w, h);
  k.mul(tmp.data(), a.data(), b.data(), n);
  box3(tmp, p.sab, w, h);
  for (std::size_t i = 0; i < n; ++i) {
    p.sa2[i] -= p.ma[i] * p.ma[i];
    p.sb2[i] -= p.mb[i] * p.mb[i];
    p.sab[i] -= p.ma[i] * p.mb[i];
  }
  return p;
}

} // namespace

double LossBreakdown::photometric(double lambda_smooth) const {
  double ap = 0;
  for (double v : appearance_per_scale) ap += v;
  return lambda_smooth * smoothness + ap;
}

std::string LossBreakdown::to_csv_row(int iteration) const {
  std::ostringstream os;
  os.precision(17);
  os << iteration;
  for (double v : appearance_per_scale) os << "," << v;
  os << "," << smoothness << "," << scale << "," << total;
  return os.str();
}

Image ssim_map(const Image& a, const Image& b) {
  check_same_shape(a, b, "ssim_map");
  Image out(a.width, a.height, a.channels);
  std::vector<double> pa, pb;
  for (int c = 0; c < a.channels; ++c) {
    extract_channel(a, c, pa);
    extract_channel(b, c, pb);
    const SsimPlanes p = ssim_planes(pa, pb, a.width, a.height);
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
        const double n1 = 2 * p.ma[i] * p.mb[i] + kC1;
        const double n2 = 2 * p.sab[i] + kC2;
        const double d1 = p.ma[i] * p.ma[i] + p.mb[i] * p.mb[i] + kC1;
        const double d2 = p.sa2[i] + p.sb2[i] + kC2;
        out.at(x, y, c) = (n1 * n2) / (d1 * d2);
      }
  }
  return out;
}

Image pe(const Image& target, const Image& recon, const LossWeights& w) {
  check_same_shape(target, recon, "pe");
  const Image ssim = ssim_map(target, recon);
  Image out(target.width, target.height, 1);
  const double a = w.alpha_ssim;
  for (int y = 0; y < target.height; ++y)
    for (int x = 0; x < target.width; ++x) {
      double s = 0, l1 = 0;
      for (int c = 0; c < target.channels; ++c) {
        s += 1.0 - ssim.at(x, y, c);
        l1 += std::abs(target.at(x, y, c) - recon.at(x, y, c));
      }
      out.at(x, y) = (a / 2) * s / target.channels + (1 - a) * l1 / target.channels;
    }
  return out;
}

Image pe_backward(const Image& target, const Image& recon, const LossWeights& w,
                  const Image& dl_dpe) {
  check_same_shape(target, recon, "pe_backward");
  const int W = target.width, H = target.height, C = target.channels;
  const std::size_t n = static_cast<std::size_t>(W) * H;
  Image out(W, H, C);
  std::vector<double> pa, pb, g_m(n), g_s(n), g_c(n), bt;
  for (int c = 0; c < C; ++c) {
    extract_channel(target, c, pa);
    extract_channel(recon, c, pb);
    const SsimPlanes p = ssim_planes(pa, pb, W, H);
    // dL/dSSIM_c = -alpha/(2C) * dL/dpe; L1 term handled directly below.
    for (std::size_t i = 0; i < n; ++i) {
      const double g = -w.alpha_ssim / (2.0 * C) * dl_dpe.data[i];
      const double n1 = 2 * p.ma[i] * p.mb[i] + kC1;
      const double n2 = 2 * p.sab[i] + kC2;
      const double d1 = p.ma[i] * p.ma[i] + p.mb[i] * p.mb[i] + kC1;
      const double d2 = p.sa2[i] + p.sb2[i] + kC2;
      const double inv = 1.0 / (d1 * d2);
      const double dmu = 2 * p.ma[i] * n2 * inv - n1 * n2 * 2 * p.mb[i] * inv / d1;
      const double dsb = -n1 * n2 * inv / d2;
      const double dsab = 2 * n1 * inv;
      // chain through sigma_b = B(b^2) - mu_b^2 and sigma_ab = B(ab) - mu_a mu_b
      g_m[i] = g * (dmu - 2 * p.mb[i] * dsb - p.ma[i] * dsab);
      g_s[i] = g * dsb;
      g_c[i] = g * dsab;
    }
    box3_adjoint(g_m, bt, W, H);
    for (std::size_t i = 0; i < n; ++i) out.data[i * C + c] = bt[i];
    box3_adjoint(g_s, bt, W, H);
    for (std::size_t i = 0; i < n; ++i) out.data[i * C + c] += 2 * pb[i] * bt[i];
    box3_adjoint(g_c, bt, W, H);
    for (std::size_t i = 0; i < n; ++i) out.data[i * C + c] += pa[i] * bt[i];
    // L1 term is local: d|t-r|/dr = sign(r-t).
    for (std::size_t i = 0; i < n; ++i)
      out.data[i * C + c] +=
          dl_dpe.data[i] * (1 - w.alpha_ssim) / C * sgn(pb[i] - pa[i]);
  }
  return out;
}

double appearance_min(const std::vector<Image>& pe_maps,
                      const std::vector<BinaryMask>& invalid, std::vector<int>& argmin_out) {
  if (pe_maps.empty()) throw std::invalid_argument("appearance_min: no source views");
  const int W = pe_maps[0].width, H = pe_maps[0].height;
  const std::size_t n = static_cast<std::size_t>(W) * H;
  argmin_out.assign(n, -1);
  double sum = 0;
  std::size_t valid_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_s = -1;
    for (std::size_t s = 0; s < pe_maps.size(); ++s) {
      if (!invalid.empty() && invalid[s].data[i]) continue;
      const double v = pe_maps[s].data[i];
      if (v < best) {
        best = v;
        best_s = static_cast<int>(s);
      }
    }
    if (best_s >= 0) {
      argmin_out[i] = best_s;
      sum += best;
      ++valid_count;
    }
  }
  if (valid_count == 0) throw std::runtime_error("appearance_min: all pixels invalid");
  return sum / static_cast<double>(valid_count);
}

double appearance_loss(const Image& target, const std::vector<Image>& recons,
                       const std::vector<BinaryMask>& invalid, const LossWeights& w) {
  std::vector<Image> pe_maps;
  pe_maps.reserve(recons.size());
  for (const auto& r : recons) pe_maps.push_back(pe(target, r, w));
  std::vector<int> argmin;
  return appearance_min(pe_maps, invalid, argmin);
}

double smoothness_loss(const DepthMap& depth, const Image& img) {
  if (depth.width != img.width || depth.height != img.height)
    throw std::invalid_argument("smoothness_loss: dimension mismatch");
  const int W = depth.width, H = depth.height, C = img.channels;
  const std::size_t n = static_cast<std::size_t>(W) * H;
  const double mu = kernels::active().sum(depth.data.data(), n) / static_cast<double>(n);
  const Image gx = gradient_x(img), gy = gradient_y(img);
  double loss = 0;
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double agx = 0, agy = 0;
      for (int c = 0; c < C; ++c) {
        agx += std::abs(gx.at(x, y, c));
        agy += std::abs(gy.at(x, y, c));
      }
      const double wx = std::exp(-agx / C), wy = std::exp(-agy / C);
      const double dx = (x + 1 < W) ? (depth.at(x + 1, y) - depth.at(x, y)) / mu : 0.0;
      const double dy = (y + 1 < H) ? (depth.at(x, y + 1) - depth.at(x, y)) / mu : 0.0;
      loss += std::abs(dx) * wx + std::abs(dy) * wy;
    }
  return loss / static_cast<double>(n);
}

std::vector<double> smoothness_backward(const DepthMap& depth, const Image& img) {
  const int W = depth.width, H = depth.height, C = img.channels;
  const std::size_t n = static_cast<std::size_t>(W) * H;
  const double mu = kernels::active().sum(depth.data.data(), n) / static_cast<double>(n);
  const Image gx = gradient_x(img), gy = gradient_y(img);
  // gradient w.r.t. d* = D/mu first
  std::vector<double> g_dstar(n, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      double agx = 0, agy = 0;
      for (int c = 0; c < C; ++c) {
        agx += std::abs(gx.at(x, y, c));
        agy += std::abs(gy.at(x, y, c));
      }
      const double wx = std::exp(-agx / C), wy = std::exp(-agy / C);
      const std::size_t i = static_cast<std::size_t>(y) * W + x;
      if (x + 1 < W) {
        const double s = sgn(depth.at(x + 1, y) - depth.at(x, y)) * wx * inv_n;
        g_dstar[i + 1] += s;
        g_dstar[i] -= s;
      }
      if (y + 1 < H) {
        const double s = sgn(depth.at(x, y + 1) - depth.at(x, y)) * wy * inv_n;
        g_dstar[i + W] += s;
        g_dstar[i] -= s;
      }
    }
  // chain through the mean normalization: d*(q) = D(q)/mu, mu = mean(D)
  double dot = 0;
  for (std::size_t i = 0; i < n; ++i) dot += g_dstar[i] * depth.data[i];
  std::vector<double> out(n);
  const double k = dot / (mu * mu * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) out[i] = g_dstar[i] / mu - k;
  return out;
}

double scale_loss(const SE3Pose& t_ts, const std::vector<PosePair>& static_pairs) {
  if (static_pairs.empty()) return 0.0;
  Eigen::Vector3d avg = Eigen::Vector3d::Zero();
  for (const auto& p : static_pairs) avg += compose(p.l_s, invert(p.l_t)).translation;
  avg /= static_cast<double>(static_pairs.size());
  return (t_ts.translation - avg).lpNorm<1>();
}

LossBreakdown photometric_loss(const ImagePyramid& target,
                               const std::vector<ImagePyramid>& recons,
                               const std::vector<std::vector<BinaryMask>>& invalid,
                               const DepthMap& full_res_depth, const LossWeights& w) {
  const int L = w.num_scales;
  if (static_cast<int>(target.levels.size()) < L)
    throw std::invalid_argument("photometric_loss: target pyramid too shallow");
  for (const auto& r : recons)
    if (static_cast<int>(r.levels.size()) < L)
      throw std::invalid_argument("photometric_loss: recon pyramid too shallow");
  LossBreakdown out;
  for (int l = 0; l < L; ++l) {
    std::vector<Image> pe_maps;
    std::vector<BinaryMask> inv;
    for (std::size_t s = 0; s < recons.size(); ++s) {
      pe_maps.push_back(pe(target.levels[l], recons[s].levels[l], w));
      if (!invalid.empty()) inv.push_back(invalid[s][l]);
    }
    std::vector<int> argmin;
    out.appearance_per_scale.push_back(appearance_min(pe_maps, inv, argmin));
  }
  out.smoothness = smoothness_loss(full_res_depth, target.levels[0]);
  out.total = out.photometric(w.lambda_smooth);
  return out;
}

LossBreakdown final_loss(const LossBreakdown& photo, double scale, const LossWeights& w) {
  LossBreakdown out = photo;
  out.scale = scale;
  out.total = photo.photometric(w.lambda_smooth) + w.beta_scale * scale;
  return out;
}

} // namespace dfit
