#include "fusionkit/types.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fusionkit {

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !std::isfinite(fx) || !(fy > 0.0) || !std::isfinite(fy)) {
    throw std::invalid_argument("intrinsics: fx and fy must be positive and finite");
  }
  if (!std::isfinite(cx) || !std::isfinite(cy)) {
    throw std::invalid_argument("intrinsics: cx and cy must be finite");
  }
}

Pose Pose::exp(const Vector6d& xi) {
  const Eigen::Vector3d omega = xi.head<3>();
  Pose out;
  const double theta = omega.norm();
  if (theta > 0.0) {
    out.rotation = Eigen::AngleAxisd(theta, omega / theta).toRotationMatrix();
  }
  out.translation = xi.tail<3>();
  return out;
}

Vector6d Pose::log() const {
  const Eigen::AngleAxisd aa(rotation);
  Vector6d xi;
  xi.head<3>() = aa.angle() * aa.axis();
  xi.tail<3>() = translation;
  return xi;
}

Pose Pose::inverse() const {
  Pose out;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation);
  return out;
}

Pose Pose::operator*(const Pose& rhs) const {
  Pose out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

bool Pose::is_rigid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

Pose relative_pose(const Pose& world_from_a, const Pose& world_from_b) {
  return world_from_b.inverse() * world_from_a;
}

size_t Mask::count() const {
  size_t n = 0;
  for (uint8_t v : data_) n += v != 0;
  return n;
}

PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = pose * p;
  return out;
}

}  // namespace fusionkit
