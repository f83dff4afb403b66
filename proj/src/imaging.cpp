#include "depthfit/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dfit {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(
      std::count(data.begin(), data.end(), std::uint8_t{1}));
}

SampleResult bilinear_sample(const Image& img, const PixelCoord& p) {
  SampleResult out;
  if (img.width <= 0 || img.height <= 0) throw std::invalid_argument("bilinear_sample: empty image");
  double u = p.u, v = p.v;
  out.out_of_bounds = (u < 0 || u > img.width - 1 || v < 0 || v > img.height - 1);
  u = std::clamp(u, 0.0, static_cast<double>(img.width - 1));
  v = std::clamp(v, 0.0, static_cast<double>(img.height - 1));
  const int x0 = std::min(static_cast<int>(std::floor(u)), img.width - 2 >= 0 ? img.width - 2 : 0);
  const int y0 = std::min(static_cast<int>(std::floor(v)), img.height - 2 >= 0 ? img.height - 2 : 0);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = u - x0, fy = v - y0;
  for (int c = 0; c < img.channels; ++c) {
    const double v00 = img.at(x0, y0, c), v10 = img.at(x1, y0, c);
    const double v01 = img.at(x0, y1, c), v11 = img.at(x1, y1, c);
    out.value[c] = (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
  }
  return out;
}

SampleGrad bilinear_sample_grad(const Image& img, const PixelCoord& p) {
  SampleGrad g;
  const bool u_clamped = (p.u < 0 || p.u > img.width - 1);
  const bool v_clamped = (p.v < 0 || p.v > img.height - 1);
  const double u = std::clamp(p.u, 0.0, static_cast<double>(img.width - 1));
  const double v = std::clamp(p.v, 0.0, static_cast<double>(img.height - 1));
  const int x0 = std::min(static_cast<int>(std::floor(u)), img.width - 2 >= 0 ? img.width - 2 : 0);
  const int y0 = std::min(static_cast<int>(std::floor(v)), img.height - 2 >= 0 ? img.height - 2 : 0);
  const int x1 = std::min(x0 + 1, img.width - 1);
  const int y1 = std::min(y0 + 1, img.height - 1);
  const double fx = u - x0, fy = v - y0;
  for (int c = 0; c < img.channels; ++c) {
    const double v00 = img.at(x0, y0, c), v10 = img.at(x1, y0, c);
    const double v01 = img.at(x0, y1, c), v11 = img.at(x1, y1, c);
    g.du[c] = u_clamped ? 0.0 : (1 - fy) * (v10 - v00) + fy * (v11 - v01);
    g.dv[c] = v_clamped ? 0.0 : (1 - fx) * (v01 - v00) + fx * (v11 - v10);
  }
  return g;
}

Image downsample(const Image& img) {
  if (img.width < 2 || img.height < 2) throw std::invalid_argument("downsample: image too small");
  Image out(img.width / 2, img.height / 2, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = 0.25 * (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                                  img.at(2 * x, 2 * y + 1, c) + img.at(2 * x + 1, 2 * y + 1, c));
  return out;
}

DepthMap downsample(const DepthMap& d) {
  if (d.width < 2 || d.height < 2) throw std::invalid_argument("downsample: depth map too small");
  DepthMap out(d.width / 2, d.height / 2);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      out.at(x, y) = 0.25 * (d.at(2 * x, 2 * y) + d.at(2 * x + 1, 2 * y) +
                             d.at(2 * x, 2 * y + 1) + d.at(2 * x + 1, 2 * y + 1));
  return out;
}

BinaryMask downsample_nearest(const BinaryMask& m) {
  if (m.width < 2 || m.height < 2) throw std::invalid_argument("downsample: mask too small");
  BinaryMask out(m.width / 2, m.height / 2);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) out.at(x, y) = m.at(2 * x, 2 * y);
  return out;
}

ImagePyramid build_pyramid(const Image& img, int num_levels) {
  if (num_levels < 1) throw std::invalid_argument("build_pyramid: need at least one level");
  ImagePyramid p;
  p.levels.push_back(img);
  for (int l = 1; l < num_levels; ++l) p.levels.push_back(downsample(p.levels.back()));
  return p;
}

Image gradient_x(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x + 1 < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = img.at(x + 1, y, c) - img.at(x, y, c);
  return out;
}

Image gradient_y(const Image& img) {
  Image out(img.width, img.height, img.channels);
  for (int y = 0; y + 1 < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = img.at(x, y + 1, c) - img.at(x, y, c);
  return out;
}

Image synthesize_view(const Image& source, const std::vector<WarpField>& region_warps,
                      const std::vector<BinaryMask>& masks, BinaryMask* invalid_out) {
  if (region_warps.size() != masks.size())
    throw std::invalid_argument("synthesize_view: one warp field per mask required");
  const int w = source.width, h = source.height;
  for (const auto& m : masks)
    if (m.width != w || m.height != h)
      throw std::invalid_argument("synthesize_view: mask size mismatch");
  // Partition check: every pixel owned by exactly one mask.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int owners = 0;
      for (const auto& m : masks) owners += m.at(x, y);
      if (owners != 1) throw std::invalid_argument("synthesize_view: masks do not partition frame");
    }

  Image out(w, h, source.channels);
  if (invalid_out) *invalid_out = BinaryMask(w, h, 0);
  for (std::size_t r = 0; r < masks.size(); ++r) {
    const auto& wf = region_warps[r];
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!masks[r].at(x, y)) continue;
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!wf.valid[i]) {
          if (invalid_out) invalid_out->at(x, y) = 1;
          continue;
        }
        const SampleResult s = bilinear_sample(source, wf.coords[i]);
        for (int c = 0; c < source.channels; ++c) out.at(x, y, c) = s.value[c];
        if (s.out_of_bounds && invalid_out) invalid_out->at(x, y) = 1;
      }
  }
  return out;
}

} // namespace dfit
