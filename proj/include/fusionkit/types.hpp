#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <vector>

namespace fusionkit {

using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Pinhole camera parameters in pixels. Pixel (u,v) addresses the sample
/// located exactly at integer coordinates (u,v); no half-pixel offset is
/// applied anywhere in this library.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const;  // throws std::invalid_argument
};

/// Rigid transform p' = R p + t. The 6-vector tangent convention is
/// (omega, t): exp() maps (omega, t) to (exp([omega]x), t), so composing
/// exp(eps) on the left perturbs a transformed point by
/// eps_omega x p' + eps_t to first order.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static Pose identity() { return Pose{}; }
  static Pose exp(const Vector6d& xi);
  Vector6d log() const;

  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;
  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  /// True when the rotation block is orthonormal with determinant +1
  /// within `tol`.
  bool is_rigid(double tol = 1e-9) const;
};

/// Relative transform taking points in frame `a` to frame `b`, given the
/// camera-to-world pose of each frame.
Pose relative_pose(const Pose& world_from_a, const Pose& world_from_b);

/// Dense H x W raster of doubles, row-major. Used for depth maps
/// (meters, 0 = no depth), confidence channels and gradients.
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, double value = 0.0)
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, value) {}

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(int x, int y) { return data_[static_cast<size_t>(y) * width_ + x]; }
  double at(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x]; }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Grid& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

using DepthMap = Grid;

/// H x W binary mask.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, bool value = false)
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height, value ? 1 : 0) {}

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }

  void set(int x, int y, bool v) { data_[static_cast<size_t>(y) * width_ + x] = v ? 1 : 0; }
  bool at(int x, int y) const { return data_[static_cast<size_t>(y) * width_ + x] != 0; }
  bool operator[](size_t i) const { return data_[i] != 0; }

  size_t count() const;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<uint8_t> data_;
};

/// H x W x 3 image, intensities in [0,1], channel-interleaved row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double value = 0.0)
      : width_(width), height_(height),
        data_(static_cast<size_t>(width) * height * 3, value) {}

  int width() const { return width_; }
  int height() const { return height_; }
  size_t size() const { return data_.size(); }

  double& at(int x, int y, int c) {
    return data_[(static_cast<size_t>(y) * width_ + x) * 3 + c];
  }
  double at(int x, int y, int c) const {
    return data_[(static_cast<size_t>(y) * width_ + x) * 3 + c];
  }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Image& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

/// Unordered 3D points in meters. The camera frame convention is X right,
/// Y down, Z forward; clouds loaded from LiDAR files stay in the sensor
/// frame until transformed with the calibration pose.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<float> reflectance;  // empty, or one value per point
  std::vector<int> beam;           // empty, or one ring index per point

  size_t size() const { return points.size(); }
  bool has_reflectance() const { return !reflectance.empty(); }
  bool has_beam() const { return !beam.empty(); }
};

/// Applies `pose` to every point, preserving attributes.
PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose);

}  // namespace fusionkit
