#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusionkit/types.hpp"

namespace fusionkit {

enum class SceneLayout { kFrontoPlane, kSlantedPlane, kTwoBoxes };
enum class TextureKind { kNoiseOctaves, kAffineRamp };

struct LidarPattern {
  int beams = 64;
  double elevation_min_deg = -24.9;
  double elevation_max_deg = 2.0;
  double azimuth_min_deg = -45.0;
  double azimuth_max_deg = 45.0;
  double azimuth_step_deg = 0.1;
  double max_range = 120.0;
};

/// Analytic scene used as ground-truth substrate: planes and boxes with a
/// procedural world-anchored albedo, a camera trajectory and a LiDAR ray
/// pattern. Rendering is deterministic in (spec, seed).
struct SceneSpec {
  SceneLayout layout = SceneLayout::kFrontoPlane;
  TextureKind texture = TextureKind::kNoiseOctaves;
  uint64_t seed = 42;

  int width = 64;
  int height = 64;
  CameraIntrinsics intrinsics{64.0, 64.0, 31.5, 31.5};
  std::vector<Pose> camera_to_world;  // one per frame

  double plane_depth = 10.0;              // fronto-parallel plane z = plane_depth
  Eigen::Vector3d slant_normal{0.25, 0.35, 1.0};  // slanted plane normal (unnormalized)
  double slant_offset = 8.0;              // plane: n_hat . p = offset

  double texture_base_frequency = 0.5;    // cycles per meter, first octave
  int texture_octaves = 4;
  double texture_contrast = 0.35;

  LidarPattern lidar;
};

/// Reasonable KITTI-flavored defaults at the given resolution: camera 1.65 m
/// above the ground, translating forward, two-box layout.
SceneSpec make_default_scene(SceneLayout layout, int width, int height, int frames,
                             uint64_t seed);

struct RenderedFrame {
  Image image;
  DepthMap depth;       // ground truth, 0 where no surface is hit
  PointCloud lidar;     // camera-frame points with beam indices
};

RenderedFrame render_scene(const SceneSpec& spec, int frame_index);

/// Depth along the ray through continuous pixel (u,v) of the given frame;
/// 0 when nothing is hit.
double scene_depth_at(const SceneSpec& spec, int frame_index, double u, double v);

/// World-anchored albedo at a surface point (used by tests to evaluate the
/// texture independently of rendering).
double scene_albedo(const SceneSpec& spec, const Eigen::Vector3d& world_point,
                    int channel);

}  // namespace fusionkit
