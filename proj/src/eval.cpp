#include "depthfit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace dfit {

namespace {

constexpr double kMinEval = 1e-3;

bool gt_valid(double g) { return std::isfinite(g) && g > 0; }

/// Lower middle element for even-length samples.
double lower_median(std::vector<double> v) {
  if (v.empty()) throw std::runtime_error("median of empty sample");
  const std::size_t k = (v.size() - 1) / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

} // namespace

std::string DepthMetrics::to_csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << abs_rel << "," << sq_rel << "," << rmse << "," << rmse_log << "," << a1 << "," << a2
     << "," << a3;
  return os.str();
}

PixelRect crop_region(int w, int h, const CropSpec& spec) {
  if (w < 1 || h < 1) throw std::invalid_argument("crop_region: empty image");
  PixelRect r;
  r.x0 = static_cast<int>(std::floor(spec.x_min * w));
  r.x1 = static_cast<int>(std::ceil(spec.x_max * w));
  r.y0 = static_cast<int>(std::floor(spec.y_min * h));
  r.y1 = static_cast<int>(std::ceil(spec.y_max * h));
  r.x0 = std::clamp(r.x0, 0, w);
  r.x1 = std::clamp(r.x1, 0, w);
  r.y0 = std::clamp(r.y0, 0, h);
  r.y1 = std::clamp(r.y1, 0, h);
  if (r.width() <= 0 || r.height() <= 0) throw std::runtime_error("crop_region: empty crop");
  return r;
}

DepthMetrics compute_metrics(const DepthMap& pred, const DepthMap& gt, double cap,
                             const PixelRect& region, bool median_scale) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw std::invalid_argument("compute_metrics: dimension mismatch");

  std::vector<double> ps, gs;
  for (int y = region.y0; y < region.y1; ++y)
    for (int x = region.x0; x < region.x1; ++x) {
      if (!gt_valid(gt.at(x, y))) continue;
      ps.push_back(pred.at(x, y));
      gs.push_back(gt.at(x, y));
    }
  if (ps.empty()) throw std::runtime_error("compute_metrics: no valid ground-truth pixels");

  if (median_scale) {
    const double ratio = lower_median(gs) / lower_median(ps);
    for (double& p : ps) p *= ratio;
  }

  DepthMetrics m;
  double se = 0, se_log = 0;
  const std::size_t n = ps.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(ps[i], kMinEval, cap);
    const double g = gs[i];
    m.abs_rel += std::abs(p - g) / g;
    m.sq_rel += (p - g) * (p - g) / g;
    se += (p - g) * (p - g);
    se_log += (std::log(p) - std::log(g)) * (std::log(p) - std::log(g));
    const double delta = std::max(p / g, g / p);
    if (delta < 1.25) m.a1 += 1;
    if (delta < 1.25 * 1.25) m.a2 += 1;
    if (delta < 1.25 * 1.25 * 1.25) m.a3 += 1;
  }
  const double dn = static_cast<double>(n);
  m.abs_rel /= dn;
  m.sq_rel /= dn;
  m.rmse = std::sqrt(se / dn);
  m.rmse_log = std::sqrt(se_log / dn);
  m.a1 /= dn;
  m.a2 /= dn;
  m.a3 /= dn;
  return m;
}

double scale_ratio(const DepthMap& pred, const DepthMap& gt, const PixelRect& region) {
  std::vector<double> ps, gs;
  for (int y = region.y0; y < region.y1; ++y)
    for (int x = region.x0; x < region.x1; ++x) {
      if (!gt_valid(gt.at(x, y))) continue;
      ps.push_back(pred.at(x, y));
      gs.push_back(gt.at(x, y));
    }
  if (ps.empty()) throw std::runtime_error("scale_ratio: no valid pixels in region");
  return lower_median(gs) / lower_median(ps);
}

} // namespace dfit
