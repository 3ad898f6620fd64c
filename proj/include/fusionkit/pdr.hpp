#pragma once

#include "fusionkit/types.hpp"

namespace fusionkit {

/// Pseudo dense representation: a depth channel and a confidence channel.
/// confidence > 0 exactly where depth > 0, and confidence <= 1.
struct PDR {
  DepthMap depth;
  Grid confidence;
};

/// Projects each point and dilates it into a disc of radius `radius`
/// (strictly r < radius). A covered pixel receives the point's depth and a
/// confidence of min(1, 1/r); pixels covered by several points store the
/// arithmetic mean of each channel's contributions. Points projecting
/// outside the raster are dropped before dilation; discs are clipped at the
/// border.
PDR generate_pdr(const PointCloud& points, const CameraIntrinsics& intrinsics,
                 int width, int height, double radius);

/// Fraction of pixels hit by at least one projected point, without any
/// dilation (each point marks its nearest integer pixel).
double coverage_fraction(const PointCloud& points, const CameraIntrinsics& intrinsics,
                         int width, int height);

/// Keeps `keep` elevation bins evenly spaced across the available range.
/// Bins come from the stored beam indices when present, otherwise from 64
/// uniform elevation bins (camera frame: elevation = atan2(-y, hypot(x,z))).
/// Point order is preserved.
PointCloud subsample_beams(const PointCloud& points, int keep);

}  // namespace fusionkit
