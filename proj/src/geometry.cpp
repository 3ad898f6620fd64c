#include "fusionkit/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace fusionkit {

namespace {

// 4-tap bilinear kernel at (u,v): integer base, fractions and an
// in-bounds verdict. Taps are clamped so a sample always exists.
struct BilinearTaps {
  int x0, x1, y0, y1;
  double ax, ay;  // fractional weights toward (x1, y1)
  bool in_bounds;
};

BilinearTaps make_taps(double u, double v, int width, int height) {
  BilinearTaps t{};
  const double fx = std::floor(u);
  const double fy = std::floor(v);
  t.x0 = static_cast<int>(fx);
  t.y0 = static_cast<int>(fy);
  t.x1 = t.x0 + 1;
  t.y1 = t.y0 + 1;
  t.ax = u - fx;
  t.ay = v - fy;
  t.in_bounds = t.x0 >= 0 && t.y0 >= 0 && t.x1 <= width - 1 && t.y1 <= height - 1;
  auto clampi = [](int x, int lo, int hi) { return x < lo ? lo : (x > hi ? hi : x); };
  t.x0 = clampi(t.x0, 0, width - 1);
  t.x1 = clampi(t.x1, 0, width - 1);
  t.y0 = clampi(t.y0, 0, height - 1);
  t.y1 = clampi(t.y1, 0, height - 1);
  return t;
}

}  // namespace

XYZMap backproject(const DepthMap& depth, const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  XYZMap out;
  out.width = depth.width();
  out.height = depth.height();
  out.points.assign(depth.size(), Eigen::Vector3d::Zero());
  out.valid = Mask(depth.width(), depth.height(), false);
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const double d = depth.at(x, y);
      if (d <= 0.0) continue;
      out.points[static_cast<size_t>(y) * out.width + x] =
          Eigen::Vector3d((x - intrinsics.cx) * d / intrinsics.fx,
                          (y - intrinsics.cy) * d / intrinsics.fy, d);
      out.valid.set(x, y, true);
    }
  }
  return out;
}

std::vector<ProjectedPoint> project(const PointCloud& points,
                                    const CameraIntrinsics& intrinsics) {
  intrinsics.validate();
  std::vector<ProjectedPoint> out;
  out.reserve(points.size());
  for (size_t i = 0; i < points.points.size(); ++i) {
    const Eigen::Vector3d& p = points.points[i];
    if (!(p.z() > 0.0)) continue;
    ProjectedPoint pp;
    pp.u = intrinsics.fx * p.x() / p.z() + intrinsics.cx;
    pp.v = intrinsics.fy * p.y() / p.z() + intrinsics.cy;
    pp.z = p.z();
    pp.index = static_cast<int>(i);
    out.push_back(pp);
  }
  return out;
}

double sample_bilinear(const Grid& grid, double u, double v, bool* in_bounds) {
  const BilinearTaps t = make_taps(u, v, grid.width(), grid.height());
  if (in_bounds) *in_bounds = t.in_bounds;
  const double top = (1.0 - t.ax) * grid.at(t.x0, t.y0) + t.ax * grid.at(t.x1, t.y0);
  const double bot = (1.0 - t.ax) * grid.at(t.x0, t.y1) + t.ax * grid.at(t.x1, t.y1);
  return (1.0 - t.ay) * top + t.ay * bot;
}

void warp_with_jacobian(const Image& src, const DepthMap& depth_t,
                        const Pose& pose_t_to_s, const CameraIntrinsics& intrinsics,
                        WarpResult* warp, WarpJacobian* jacobian) {
  intrinsics.validate();
  const int width = depth_t.width();
  const int height = depth_t.height();
  if (src.width() != width || src.height() != height) {
    throw std::invalid_argument("warp: source image and depth map shapes differ");
  }

  if (warp) {
    warp->image = Image(width, height, 0.0);
    warp->valid = Mask(width, height, false);
  }
  if (jacobian) {
    jacobian->width = width;
    jacobian->height = height;
    jacobian->d_depth.assign(depth_t.size(), Eigen::Vector3d::Zero());
    jacobian->d_pose.assign(depth_t.size(), Eigen::Matrix<double, 3, 6>::Zero());
    jacobian->valid = Mask(width, height, false);
  }

  const Eigen::Matrix3d& R = pose_t_to_s.rotation;
  const Eigen::Vector3d& t = pose_t_to_s.translation;

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double d = depth_t.at(x, y);
      if (d <= 0.0) continue;

      const Eigen::Vector3d ray((x - intrinsics.cx) / intrinsics.fx,
                                (y - intrinsics.cy) / intrinsics.fy, 1.0);
      const Eigen::Vector3d ps = R * (d * ray) + t;
      if (!(ps.z() > 0.0)) continue;

      const double inv_z = 1.0 / ps.z();
      const double us = intrinsics.fx * ps.x() * inv_z + intrinsics.cx;
      const double vs = intrinsics.fy * ps.y() * inv_z + intrinsics.cy;

      const BilinearTaps taps = make_taps(us, vs, width, height);
      if (!taps.in_bounds) continue;

      const size_t idx = static_cast<size_t>(y) * width + x;
      Eigen::Matrix<double, 3, 2> d_image_duv;  // per channel (du, dv)
      for (int c = 0; c < 3; ++c) {
        const double i00 = src.at(taps.x0, taps.y0, c);
        const double i10 = src.at(taps.x1, taps.y0, c);
        const double i01 = src.at(taps.x0, taps.y1, c);
        const double i11 = src.at(taps.x1, taps.y1, c);
        const double top = (1.0 - taps.ax) * i00 + taps.ax * i10;
        const double bot = (1.0 - taps.ax) * i01 + taps.ax * i11;
        if (warp) warp->image.at(x, y, c) = (1.0 - taps.ay) * top + taps.ay * bot;
        if (jacobian) {
          d_image_duv(c, 0) = (1.0 - taps.ay) * (i10 - i00) + taps.ay * (i11 - i01);
          d_image_duv(c, 1) = (1.0 - taps.ax) * (i01 - i00) + taps.ax * (i11 - i10);
        }
      }
      if (warp) warp->valid.set(x, y, true);

      if (jacobian) {
        Eigen::Matrix<double, 2, 3> duv_dps;
        duv_dps << intrinsics.fx * inv_z, 0.0, -intrinsics.fx * ps.x() * inv_z * inv_z,
                   0.0, intrinsics.fy * inv_z, -intrinsics.fy * ps.y() * inv_z * inv_z;

        const Eigen::Vector3d dps_dd = R * ray;
        jacobian->d_depth[idx] = d_image_duv * (duv_dps * dps_dd);

        Eigen::Matrix<double, 3, 6> dps_deps;
        // left increment: dps/d(omega) = -[ps]x, dps/d(t) = I
        dps_deps << 0.0, ps.z(), -ps.y(), 1.0, 0.0, 0.0,
                    -ps.z(), 0.0, ps.x(), 0.0, 1.0, 0.0,
                    ps.y(), -ps.x(), 0.0, 0.0, 0.0, 1.0;
        jacobian->d_pose[idx] = d_image_duv * (duv_dps * dps_deps);
        jacobian->valid.set(x, y, true);
      }
    }
  }
}

WarpResult warp_image(const Image& src, const DepthMap& depth_t,
                      const Pose& pose_t_to_s, const CameraIntrinsics& intrinsics) {
  WarpResult out;
  warp_with_jacobian(src, depth_t, pose_t_to_s, intrinsics, &out, nullptr);
  return out;
}

WarpJacobian warp_jacobian(const Image& src, const DepthMap& depth_t,
                           const Pose& pose_t_to_s, const CameraIntrinsics& intrinsics) {
  WarpJacobian out;
  warp_with_jacobian(src, depth_t, pose_t_to_s, intrinsics, nullptr, &out);
  return out;
}

}  // namespace fusionkit
