#pragma once

#include <string>

#include "depthfit/imaging.hpp"

namespace dfit {

struct DepthMetrics {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0;
  double a1 = 0, a2 = 0, a3 = 0;  // delta < 1.25, 1.25^2, 1.25^3

  /// CSV row in column order: abs_rel, sq_rel, rmse, rmse_log, a1, a2, a3.
  std::string to_csv_row() const;
};

/// Normalized crop bounds; defaults are the standard evaluation crop.
struct CropSpec {
  double x_min = 0.03594771, x_max = 0.96405229;
  double y_min = 0.40810811, y_max = 0.99189189;

  static CropSpec full() { return {0, 1, 0, 1}; }
};

struct PixelRect {
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;  // half-open [x0,x1) x [y0,y1)
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
};

/// Pixels whose normalized coordinates fall in the spec:
/// floor(min*dim) .. ceil(max*dim) exclusive. Throws if empty.
PixelRect crop_region(int w, int h, const CropSpec& spec);

/// Standard depth metrics over valid (finite, > 0) ground-truth pixels of the
/// region. Predictions are clamped to [1e-3, cap]; with median_scale the
/// prediction is first multiplied by med(gt)/med(pred).
DepthMetrics compute_metrics(const DepthMap& pred, const DepthMap& gt, double cap,
                             const PixelRect& region, bool median_scale);

/// med(gt)/med(pred) over the region (median of an even-length sample is the
/// lower middle element).
double scale_ratio(const DepthMap& pred, const DepthMap& gt, const PixelRect& region);

} // namespace dfit
