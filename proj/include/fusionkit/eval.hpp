#pragma once

#include <cstdint>
#include <optional>

#include "fusionkit/types.hpp"

namespace fusionkit {

/// Pixel rectangle, half-open: x in [x0, x1), y in [y0, y1).
struct CropRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool contains(int x, int y) const {
    return x >= x0 && x < x1 && y >= y0 && y < y1;
  }
};

/// The customary evaluation crop for KITTI-sized depth maps:
/// y in [0.40810811 H, 0.99189189 H), x in [0.03594771 W, 0.96405229 W),
/// bounds truncated to integers.
CropRect eigen_eval_crop(int width, int height);

struct MetricReport {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;      // meters
  double rmse_log = 0.0;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double delta3 = 0.0;
  double rmse_mm = 0.0;   // completion convention, millimeters
  double irmse = 0.0;     // inverse depth, 1/km
  double imae = 0.0;      // inverse depth, 1/km
  int64_t n_valid = 0;
};

/// Standard depth metrics over pixels with 0 < gt <= cap inside the crop.
/// Predictions are floored at 1 mm so the log metrics stay finite; delta
/// thresholds are strict (< 1.25^k). Throws NumericError when no pixel
/// survives.
MetricReport depth_metrics(const DepthMap& pred, const DepthMap& gt, double cap,
                           const std::optional<CropRect>& crop = std::nullopt);

}  // namespace fusionkit
