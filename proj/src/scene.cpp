#include "fusionkit/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fusionkit {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kNoHit = std::numeric_limits<double>::infinity();

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform [0,1) from discrete lattice coordinates.
double lattice_value(int64_t ix, int64_t iy, int64_t iz, uint64_t seed) {
  uint64_t h = seed;
  h = splitmix64(h ^ static_cast<uint64_t>(ix) * 0x8da6b343ULL);
  h = splitmix64(h ^ static_cast<uint64_t>(iy) * 0xd8163841ULL);
  h = splitmix64(h ^ static_cast<uint64_t>(iz) * 0xcb1ab31fULL);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double quintic(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

// Smooth trilinear value noise in [0,1).
double value_noise(const Eigen::Vector3d& p, uint64_t seed) {
  const double fx = std::floor(p.x());
  const double fy = std::floor(p.y());
  const double fz = std::floor(p.z());
  const auto ix = static_cast<int64_t>(fx);
  const auto iy = static_cast<int64_t>(fy);
  const auto iz = static_cast<int64_t>(fz);
  const double wx = quintic(p.x() - fx);
  const double wy = quintic(p.y() - fy);
  const double wz = quintic(p.z() - fz);

  double blend_z[2];
  for (int dz = 0; dz < 2; ++dz) {
    const double v00 = lattice_value(ix, iy, iz + dz, seed);
    const double v10 = lattice_value(ix + 1, iy, iz + dz, seed);
    const double v01 = lattice_value(ix, iy + 1, iz + dz, seed);
    const double v11 = lattice_value(ix + 1, iy + 1, iz + dz, seed);
    const double top = v00 + wx * (v10 - v00);
    const double bot = v01 + wx * (v11 - v01);
    blend_z[dz] = top + wy * (bot - top);
  }
  return blend_z[0] + wz * (blend_z[1] - blend_z[0]);
}

struct BoxSpec {
  Eigen::Vector3d lo;
  Eigen::Vector3d hi;
};

struct SceneGeometry {
  // plane rows: unit normal n and offset c with n . p = c, facing the camera
  std::vector<Eigen::Vector3d> plane_normals;
  std::vector<double> plane_offsets;
  std::vector<BoxSpec> boxes;
};

constexpr double kGroundY = 1.65;   // camera height above ground, Y down
constexpr double kBackWallZ = 50.0;

SceneGeometry build_geometry(const SceneSpec& spec) {
  SceneGeometry g;
  switch (spec.layout) {
    case SceneLayout::kFrontoPlane:
      g.plane_normals.push_back(Eigen::Vector3d(0, 0, 1));
      g.plane_offsets.push_back(spec.plane_depth);
      break;
    case SceneLayout::kSlantedPlane: {
      const Eigen::Vector3d n = spec.slant_normal.normalized();
      g.plane_normals.push_back(n);
      g.plane_offsets.push_back(spec.slant_offset);
      break;
    }
    case SceneLayout::kTwoBoxes:
      g.plane_normals.push_back(Eigen::Vector3d(0, 1, 0));  // ground
      g.plane_offsets.push_back(kGroundY);
      g.plane_normals.push_back(Eigen::Vector3d(0, 0, 1));  // back wall
      g.plane_offsets.push_back(kBackWallZ);
      g.boxes.push_back({{-3.2, kGroundY - 1.8, 9.0}, {-1.2, kGroundY, 11.0}});
      g.boxes.push_back({{1.6, kGroundY - 1.5, 12.5}, {4.0, kGroundY, 15.5}});
      break;
  }
  return g;
}

double intersect_box(const BoxSpec& box, const Eigen::Vector3d& origin,
                     const Eigen::Vector3d& dir) {
  double t_enter = -kNoHit;
  double t_exit = kNoHit;
  for (int axis = 0; axis < 3; ++axis) {
    if (dir[axis] == 0.0) {
      if (origin[axis] < box.lo[axis] || origin[axis] > box.hi[axis]) return kNoHit;
      continue;
    }
    double t0 = (box.lo[axis] - origin[axis]) / dir[axis];
    double t1 = (box.hi[axis] - origin[axis]) / dir[axis];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit || t_enter <= 0.0) return kNoHit;
  return t_enter;
}

// Smallest positive ray parameter over all scene surfaces, or infinity.
double intersect_scene(const SceneGeometry& g, const Eigen::Vector3d& origin,
                       const Eigen::Vector3d& dir) {
  double best = kNoHit;
  for (size_t i = 0; i < g.plane_normals.size(); ++i) {
    const double denom = g.plane_normals[i].dot(dir);
    if (denom == 0.0) continue;
    const double t = (g.plane_offsets[i] - g.plane_normals[i].dot(origin)) / denom;
    if (t > 0.0 && t < best) best = t;
  }
  for (const BoxSpec& box : g.boxes) {
    const double t = intersect_box(box, origin, dir);
    if (t < best) best = t;
  }
  return best;
}

const Pose& frame_pose(const SceneSpec& spec, int frame_index) {
  if (frame_index < 0 || frame_index >= static_cast<int>(spec.camera_to_world.size())) {
    throw std::invalid_argument("render_scene: frame index out of range");
  }
  return spec.camera_to_world[frame_index];
}

void check_camera_outside_boxes(const SceneGeometry& g, const Eigen::Vector3d& origin) {
  for (const BoxSpec& box : g.boxes) {
    if ((origin.array() >= box.lo.array()).all() &&
        (origin.array() <= box.hi.array()).all()) {
      throw std::invalid_argument("render_scene: camera is inside a box");
    }
  }
}

}  // namespace

double scene_albedo(const SceneSpec& spec, const Eigen::Vector3d& p, int channel) {
  if (spec.texture == TextureKind::kAffineRamp) {
    const uint64_t base = splitmix64(spec.seed * 3 + channel);
    auto coeff = [&](int i) {
      return (lattice_value(i, channel, 17, base) - 0.5) * 0.06;  // per meter
    };
    const double v = 0.5 + coeff(0) * p.x() + coeff(1) * p.y() + coeff(2) * p.z();
    return std::clamp(v, 0.0, 1.0);
  }

  double acc = 0.0;
  double amp = 1.0;
  double amp_sum = 0.0;
  double freq = spec.texture_base_frequency;
  for (int o = 0; o < spec.texture_octaves; ++o) {
    const uint64_t octave_seed = splitmix64(spec.seed + 1315423911ULL * (o + 1) + channel);
    acc += amp * value_noise(p * freq, octave_seed);
    amp_sum += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  const double centered = acc / amp_sum - 0.5;
  return std::clamp(0.5 + 2.0 * spec.texture_contrast * centered, 0.0, 1.0);
}

double scene_depth_at(const SceneSpec& spec, int frame_index, double u, double v) {
  spec.intrinsics.validate();
  const SceneGeometry geometry = build_geometry(spec);
  const Pose& pose = frame_pose(spec, frame_index);
  const Eigen::Vector3d ray_cam((u - spec.intrinsics.cx) / spec.intrinsics.fx,
                                (v - spec.intrinsics.cy) / spec.intrinsics.fy, 1.0);
  const double t =
      intersect_scene(geometry, pose.translation, pose.rotation * ray_cam);
  return std::isinf(t) ? 0.0 : t;
}

RenderedFrame render_scene(const SceneSpec& spec, int frame_index) {
  spec.intrinsics.validate();
  if (spec.width <= 0 || spec.height <= 0) {
    throw std::invalid_argument("render_scene: raster dimensions must be positive");
  }
  const SceneGeometry geometry = build_geometry(spec);
  const Pose& pose = frame_pose(spec, frame_index);
  check_camera_outside_boxes(geometry, pose.translation);

  RenderedFrame frame;
  frame.image = Image(spec.width, spec.height, 0.5);
  frame.depth = DepthMap(spec.width, spec.height, 0.0);

  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const Eigen::Vector3d ray_cam((x - spec.intrinsics.cx) / spec.intrinsics.fx,
                                    (y - spec.intrinsics.cy) / spec.intrinsics.fy, 1.0);
      const Eigen::Vector3d dir = pose.rotation * ray_cam;
      const double t = intersect_scene(geometry, pose.translation, dir);
      if (std::isinf(t)) continue;  // keeps gray pixel, zero depth
      frame.depth.at(x, y) = t;
      const Eigen::Vector3d world = pose.translation + t * dir;
      for (int c = 0; c < 3; ++c) {
        frame.image.at(x, y, c) = scene_albedo(spec, world, c);
      }
    }
  }

  // LiDAR sweep: camera-frame unit rays on the beam pattern.
  const LidarPattern& lp = spec.lidar;
  if (lp.beams > 0 && lp.azimuth_step_deg > 0.0) {
    for (int b = 0; b < lp.beams; ++b) {
      const double frac = lp.beams == 1 ? 0.5 : static_cast<double>(b) / (lp.beams - 1);
      const double elev =
          (lp.elevation_min_deg + frac * (lp.elevation_max_deg - lp.elevation_min_deg)) *
          kPi / 180.0;
      for (double az_deg = lp.azimuth_min_deg; az_deg <= lp.azimuth_max_deg;
           az_deg += lp.azimuth_step_deg) {
        const double az = az_deg * kPi / 180.0;
        const Eigen::Vector3d dir_cam(std::sin(az) * std::cos(elev), -std::sin(elev),
                                      std::cos(az) * std::cos(elev));
        const double t =
            intersect_scene(geometry, pose.translation, pose.rotation * dir_cam);
        if (std::isinf(t) || t > lp.max_range) continue;
        frame.lidar.points.push_back(t * dir_cam);
        frame.lidar.beam.push_back(b);
      }
    }
  }
  return frame;
}

SceneSpec make_default_scene(SceneLayout layout, int width, int height, int frames,
                             uint64_t seed) {
  SceneSpec spec;
  spec.layout = layout;
  spec.seed = seed;
  spec.width = width;
  spec.height = height;
  spec.intrinsics.fx = 0.58 * width;
  spec.intrinsics.fy = 0.58 * width;
  spec.intrinsics.cx = 0.5 * (width - 1);
  spec.intrinsics.cy = 0.5 * (height - 1);

  // lateral sweep around the origin; baseline scaled to scene depth
  const double baseline = 0.15;
  for (int i = 0; i < frames; ++i) {
    Pose pose;
    pose.translation = Eigen::Vector3d((i - 0.5 * (frames - 1)) * baseline, 0.0, 0.0);
    spec.camera_to_world.push_back(pose);
  }
  return spec;
}

}  // namespace fusionkit
