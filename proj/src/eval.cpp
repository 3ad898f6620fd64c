#include "fusionkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fusionkit/errors.hpp"

namespace fusionkit {

CropRect eigen_eval_crop(int width, int height) {
  CropRect crop;
  crop.y0 = static_cast<int>(0.40810811 * height);
  crop.y1 = static_cast<int>(0.99189189 * height);
  crop.x0 = static_cast<int>(0.03594771 * width);
  crop.x1 = static_cast<int>(0.96405229 * width);
  return crop;
}

MetricReport depth_metrics(const DepthMap& pred, const DepthMap& gt, double cap,
                           const std::optional<CropRect>& crop) {
  if (!pred.same_shape(gt)) {
    throw std::invalid_argument("depth_metrics: shapes differ");
  }
  if (!(cap > 0.0)) throw std::invalid_argument("depth_metrics: cap must be positive");

  constexpr double kMinPred = 1e-3;  // meters; keeps the log metrics finite

  MetricReport r;
  double sum_abs_rel = 0, sum_sq_rel = 0, sum_sq = 0, sum_sq_log = 0;
  double sum_inv_sq = 0, sum_inv_abs = 0;
  int64_t d1 = 0, d2 = 0, d3 = 0;
  constexpr double kT1 = 1.25;
  constexpr double kT2 = 1.25 * 1.25;
  constexpr double kT3 = 1.25 * 1.25 * 1.25;

  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      const double g = gt.at(x, y);
      if (!(g > 0.0) || g > cap) continue;
      if (crop && !crop->contains(x, y)) continue;
      const double p = std::max(pred.at(x, y), kMinPred);
      ++r.n_valid;

      const double err = p - g;
      sum_abs_rel += std::abs(err) / g;
      sum_sq_rel += err * err / g;
      sum_sq += err * err;
      const double log_err = std::log(p) - std::log(g);
      sum_sq_log += log_err * log_err;

      const double ratio = std::max(p / g, g / p);
      d1 += ratio < kT1;
      d2 += ratio < kT2;
      d3 += ratio < kT3;

      const double inv_err = 1000.0 / p - 1000.0 / g;  // 1/km
      sum_inv_sq += inv_err * inv_err;
      sum_inv_abs += std::abs(inv_err);
    }
  }

  if (r.n_valid == 0) throw NumericError("depth_metrics: no valid pixels after cap/crop");

  const double inv_n = 1.0 / static_cast<double>(r.n_valid);
  r.abs_rel = sum_abs_rel * inv_n;
  r.sq_rel = sum_sq_rel * inv_n;
  r.rmse = std::sqrt(sum_sq * inv_n);
  r.rmse_log = std::sqrt(sum_sq_log * inv_n);
  r.delta1 = d1 * inv_n;
  r.delta2 = d2 * inv_n;
  r.delta3 = d3 * inv_n;
  r.rmse_mm = r.rmse * 1000.0;
  r.irmse = std::sqrt(sum_inv_sq * inv_n);
  r.imae = sum_inv_abs * inv_n;
  return r;
}

}  // namespace fusionkit
