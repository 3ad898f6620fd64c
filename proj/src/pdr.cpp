#include "fusionkit/pdr.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <vector>

#include "fusionkit/geometry.hpp"

namespace fusionkit {

PDR generate_pdr(const PointCloud& points, const CameraIntrinsics& intrinsics,
                 int width, int height, double radius) {
  if (!(radius >= 1.0)) {
    throw std::invalid_argument("generate_pdr: radius must be >= 1 pixel");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("generate_pdr: raster dimensions must be positive");
  }

  std::vector<double> depth_sum(static_cast<size_t>(width) * height, 0.0);
  std::vector<double> conf_sum(static_cast<size_t>(width) * height, 0.0);
  std::vector<int> count(static_cast<size_t>(width) * height, 0);

  const double r2_max = radius * radius;
  for (const ProjectedPoint& p : project(points, intrinsics)) {
    if (p.u < 0.0 || p.u > width - 1 || p.v < 0.0 || p.v > height - 1) continue;
    const int x_lo = std::max(0, static_cast<int>(std::ceil(p.u - radius)));
    const int x_hi = std::min(width - 1, static_cast<int>(std::floor(p.u + radius)));
    const int y_lo = std::max(0, static_cast<int>(std::ceil(p.v - radius)));
    const int y_hi = std::min(height - 1, static_cast<int>(std::floor(p.v + radius)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double du = p.u - x;
        const double dv = p.v - y;
        const double r2 = du * du + dv * dv;
        if (!(r2 < r2_max)) continue;
        const size_t idx = static_cast<size_t>(y) * width + x;
        const double r = std::sqrt(r2);
        depth_sum[idx] += p.z;
        conf_sum[idx] += r <= 1.0 ? 1.0 : 1.0 / r;
        count[idx] += 1;
      }
    }
  }

  PDR out;
  out.depth = DepthMap(width, height, 0.0);
  out.confidence = Grid(width, height, 0.0);
  for (size_t i = 0; i < count.size(); ++i) {
    if (count[i] == 0) continue;
    out.depth[i] = depth_sum[i] / count[i];
    out.confidence[i] = conf_sum[i] / count[i];
  }
  return out;
}

double coverage_fraction(const PointCloud& points, const CameraIntrinsics& intrinsics,
                         int width, int height) {
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("coverage_fraction: raster dimensions must be positive");
  }
  Mask hit(width, height, false);
  for (const ProjectedPoint& p : project(points, intrinsics)) {
    if (p.u < 0.0 || p.u > width - 1 || p.v < 0.0 || p.v > height - 1) continue;
    hit.set(static_cast<int>(std::lround(p.u)), static_cast<int>(std::lround(p.v)), true);
  }
  return static_cast<double>(hit.count()) / (static_cast<double>(width) * height);
}

namespace {

constexpr int kElevationBins = 64;

std::vector<int> elevation_bins(const PointCloud& cloud) {
  std::vector<double> elev(cloud.size());
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    elev[i] = std::atan2(-p.y(), std::hypot(p.x(), p.z()));
    lo = std::min(lo, elev[i]);
    hi = std::max(hi, elev[i]);
  }
  std::vector<int> bins(cloud.size(), 0);
  if (hi > lo) {
    const double scale = kElevationBins / (hi - lo);
    for (size_t i = 0; i < cloud.size(); ++i) {
      bins[i] = std::min(kElevationBins - 1, static_cast<int>((elev[i] - lo) * scale));
    }
  }
  return bins;
}

}  // namespace

PointCloud subsample_beams(const PointCloud& points, int keep) {
  if (keep < 1) throw std::invalid_argument("subsample_beams: keep must be >= 1");

  std::vector<int> bin_of_point;      // per point, a dense bin id
  int bin_count = 0;
  if (points.has_beam()) {
    std::set<int> distinct(points.beam.begin(), points.beam.end());
    std::vector<int> ordered(distinct.begin(), distinct.end());
    bin_count = static_cast<int>(ordered.size());
    bin_of_point.resize(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
      bin_of_point[i] = static_cast<int>(
          std::lower_bound(ordered.begin(), ordered.end(), points.beam[i]) -
          ordered.begin());
    }
  } else {
    bin_of_point = elevation_bins(points);
    bin_count = points.size() == 0 ? 0 : kElevationBins;
  }

  if (keep > bin_count) {
    throw std::invalid_argument("subsample_beams: keep exceeds available beam bins");
  }

  std::set<int> selected;
  for (int j = 0; j < keep; ++j) {
    const double pos = keep == 1 ? 0.0
                                 : static_cast<double>(j) * (bin_count - 1) / (keep - 1);
    selected.insert(static_cast<int>(std::lround(pos)));
  }

  PointCloud out;
  for (size_t i = 0; i < points.size(); ++i) {
    if (!selected.count(bin_of_point[i])) continue;
    out.points.push_back(points.points[i]);
    if (points.has_reflectance()) out.reflectance.push_back(points.reflectance[i]);
    if (points.has_beam()) out.beam.push_back(points.beam[i]);
  }
  return out;
}

}  // namespace fusionkit
