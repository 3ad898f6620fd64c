#pragma once

#include <vector>

#include "fusionkit/types.hpp"

namespace fusionkit {

/// Per-pixel 3D points lifted from a depth map. Pixels without depth carry
/// (0,0,0) and valid = false.
struct XYZMap {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector3d> points;
  Mask valid;

  const Eigen::Vector3d& at(int x, int y) const {
    return points[static_cast<size_t>(y) * width + x];
  }
};

/// Lifts each pixel (u,v) with depth d > 0 to
///   x = (u - cx) d / fx,  y = (v - cy) d / fy,  z = d.
XYZMap backproject(const DepthMap& depth, const CameraIntrinsics& intrinsics);

struct ProjectedPoint {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;  // camera-frame depth, > 0
  int index = 0;   // index into the source cloud
};

/// Projects camera-frame points to continuous pixel coordinates
/// u = fx X/Z + cx, v = fy Y/Z + cy. Points with Z <= 0 are dropped.
std::vector<ProjectedPoint> project(const PointCloud& points,
                                    const CameraIntrinsics& intrinsics);

/// Bilinear sample of one channel at continuous (u,v). Taps are clamped to
/// the image border; *in_bounds is cleared when any of the 4 taps falls
/// outside the raster.
double sample_bilinear(const Grid& grid, double u, double v, bool* in_bounds);

struct WarpResult {
  Image image;
  Mask valid;
};

/// Synthesizes the target view from `src`: lifts each target pixel by
/// depth_t, maps it with pose_t_to_s, reprojects and bilinearly samples
/// src. Pixels with no depth, behind the camera, or sampling outside the
/// source raster are invalid.
WarpResult warp_image(const Image& src, const DepthMap& depth_t,
                      const Pose& pose_t_to_s, const CameraIntrinsics& intrinsics);

/// Analytic derivatives of the warped intensities. d_depth is per pixel the
/// 3-channel derivative w.r.t. that pixel's depth; d_pose is w.r.t. the
/// 6-dof left-multiplicative pose increment (omega, t). Invalid pixels hold
/// zeros.
struct WarpJacobian {
  int width = 0;
  int height = 0;
  std::vector<Eigen::Vector3d> d_depth;
  std::vector<Eigen::Matrix<double, 3, 6>> d_pose;
  Mask valid;
};

WarpJacobian warp_jacobian(const Image& src, const DepthMap& depth_t,
                           const Pose& pose_t_to_s, const CameraIntrinsics& intrinsics);

/// One-pass variant used by the loss stack; either output may be null.
void warp_with_jacobian(const Image& src, const DepthMap& depth_t,
                        const Pose& pose_t_to_s, const CameraIntrinsics& intrinsics,
                        WarpResult* warp, WarpJacobian* jacobian);

}  // namespace fusionkit
