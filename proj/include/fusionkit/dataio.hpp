#pragma once

#include <filesystem>
#include <string>

#include "fusionkit/errors.hpp"
#include "fusionkit/types.hpp"

namespace fusionkit {

/// 16-bit single-channel PNG, meters = raw / 256, raw 0 = no depth.
DepthMap load_depth_png(const std::filesystem::path& path);
void save_depth_png(const DepthMap& depth, const std::filesystem::path& path);

/// 16-bit single-channel PNG, value = raw / 65535.
Grid load_confidence_png(const std::filesystem::path& path);
void save_confidence_png(const Grid& confidence, const std::filesystem::path& path);

/// 8-bit RGB PNG, intensities = raw / 255.
Image load_image_png(const std::filesystem::path& path);
void save_image_png(const Image& image, const std::filesystem::path& path);

/// KITTI velodyne scan: little-endian float32 records (x, y, z, reflectance).
/// The cloud stays in the sensor frame.
PointCloud load_velodyne_bin(const std::filesystem::path& path);
void save_velodyne_bin(const PointCloud& cloud, const std::filesystem::path& path);

struct Calibration {
  CameraIntrinsics intrinsics;
  Pose lidar_to_camera;  // rectified: R0_rect composed with Tr_velo_to_cam
};

/// KITTI-style calib text: keys P2 (3x4), R0_rect (3x3), Tr_velo_to_cam
/// (3x4), whitespace-separated row-major values.
Calibration load_calib(const std::filesystem::path& path);
void save_calib(const Calibration& calib, const std::filesystem::path& path);

enum class PseudoLidarFormat { kPlyAscii, kVelodyneBin };

/// Lifts every valid depth pixel to a camera-frame point. PLY output is
/// ASCII and carries per-point color when an image is supplied; bin output
/// writes reflectance 0.
void export_pseudolidar(const DepthMap& depth, const Image* image,
                        const CameraIntrinsics& intrinsics,
                        const std::filesystem::path& path, PseudoLidarFormat format);

/// Reads the vertex positions of an ASCII PLY file (colors are ignored).
PointCloud load_ply(const std::filesystem::path& path);

/// Camera-to-world poses, one per line as the first 3 rows of the 4x4
/// transform (12 values, row-major).
std::vector<Pose> load_poses_txt(const std::filesystem::path& path);
void save_poses_txt(const std::vector<Pose>& poses, const std::filesystem::path& path);

/// Axis permutation taking the velodyne frame (X forward, Y left, Z up) to
/// the camera frame (X right, Y down, Z forward).
Pose lidar_axes_to_camera();

}  // namespace fusionkit
