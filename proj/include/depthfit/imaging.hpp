#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "depthfit/geometry.hpp"

namespace dfit {

/// Row-major raster of [0,1] intensities with 1 or 3 channels.
struct Image {
  int width = 0, height = 0, channels = 1;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  double& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t size() const { return data.size(); }
};

/// Per-pixel depth in metres.
struct DepthMap {
  int width = 0, height = 0;
  std::vector<double> data;

  DepthMap() = default;
  DepthMap(int w, int h, double fill = 0.0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

struct BinaryMask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> data;

  BinaryMask() = default;
  BinaryMask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const;
};

struct ImagePyramid {
  std::vector<Image> levels;  // levels[l] is the source downsampled l times
};

struct SampleResult {
  std::array<double, 3> value{};   // channels beyond `channels` are zero
  bool out_of_bounds = false;      // coordinate was clamped to the border
};

/// Bilinear sample with clamp-to-edge; integer coordinates hit pixel centers.
SampleResult bilinear_sample(const Image& img, const PixelCoord& p);

/// Derivative of each sampled channel w.r.t. (u, v). Zero along an axis where
/// the coordinate is clamped outside the image.
struct SampleGrad {
  std::array<double, 3> du{};
  std::array<double, 3> dv{};
};
SampleGrad bilinear_sample_grad(const Image& img, const PixelCoord& p);

/// 2x2 box-average downsample (floor dimensions). Throws on width/height < 2.
Image downsample(const Image& img);
DepthMap downsample(const DepthMap& d);
/// Nearest (top-left) mask subsample; preserves the partition property.
BinaryMask downsample_nearest(const BinaryMask& m);

ImagePyramid build_pyramid(const Image& img, int num_levels);

/// Forward differences; last column / row are zero.
Image gradient_x(const Image& img);
Image gradient_y(const Image& img);

/// Per-pixel warp targets for one region of a view.
struct WarpField {
  int width = 0, height = 0;
  std::vector<PixelCoord> coords;
  std::vector<std::uint8_t> valid;  // 0 when the warp was behind-camera

  WarpField() = default;
  WarpField(int w, int h)
      : width(w), height(h),
        coords(static_cast<std::size_t>(w) * h),
        valid(static_cast<std::size_t>(w) * h, 1) {}
};

/// Composite a synthesized target view from one source image: each region's
/// mask selects its own warp field. Pixels whose warp is invalid or samples
/// out of bounds are flagged in `invalid_out`. Masks must partition the frame.
Image synthesize_view(const Image& source, const std::vector<WarpField>& region_warps,
                      const std::vector<BinaryMask>& masks, BinaryMask* invalid_out = nullptr);

} // namespace dfit
