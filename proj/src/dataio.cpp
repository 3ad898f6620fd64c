#include "fusionkit/dataio.hpp"

#include <png.h>

#include <algorithm>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

#include "fusionkit/geometry.hpp"

namespace fusionkit {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngRaster {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int channels = 0;
  std::vector<uint16_t> pixels16;  // used when bit_depth == 16
  std::vector<uint8_t> pixels8;    // used when bit_depth == 8
};

[[noreturn]] void png_failure(png_structp, png_const_charp msg) {
  throw FormatError(std::string("png: ") + msg);
}

PngRaster read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw FormatError("cannot open " + path.string());

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_failure, nullptr);
  if (!png) throw FormatError("png: failed to allocate reader");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("png: failed to allocate info");
  }

  try {
    png_init_io(png, file.get());
    png_read_info(png, info);

    PngRaster raster;
    raster.width = static_cast<int>(png_get_image_width(png, info));
    raster.height = static_cast<int>(png_get_image_height(png, info));
    raster.bit_depth = png_get_bit_depth(png, info);
    raster.channels = png_get_channels(png, info);

    if (raster.bit_depth == 16 && std::endian::native == std::endian::little) {
      png_set_swap(png);
    }
    png_read_update_info(png, info);

    const size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<uint8_t> storage(row_bytes * raster.height);
    std::vector<png_bytep> rows(raster.height);
    for (int y = 0; y < raster.height; ++y) rows[y] = storage.data() + row_bytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const size_t n = static_cast<size_t>(raster.width) * raster.height * raster.channels;
    if (raster.bit_depth == 16) {
      raster.pixels16.resize(n);
      std::memcpy(raster.pixels16.data(), storage.data(), n * 2);
    } else if (raster.bit_depth == 8) {
      raster.pixels8.resize(n);
      std::memcpy(raster.pixels8.data(), storage.data(), n);
    }
    return raster;
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
}

void write_png16_gray(const std::filesystem::path& path, int width, int height,
                      const std::vector<uint16_t>& pixels) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw FormatError("cannot open for writing " + path.string());

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_failure, nullptr);
  if (!png) throw FormatError("png: failed to allocate writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw FormatError("png: failed to allocate info");
  }
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (std::endian::native == std::endian::little) png_set_swap(png);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
      rows[y] = reinterpret_cast<png_bytep>(
          const_cast<uint16_t*>(pixels.data() + static_cast<size_t>(y) * width));
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
}

void write_png8_rgb(const std::filesystem::path& path, int width, int height,
                    const std::vector<uint8_t>& pixels) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw FormatError("cannot open for writing " + path.string());
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_failure, nullptr);
  if (!png) throw FormatError("png: failed to allocate writer");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw FormatError("png: failed to allocate info");
  }
  try {
    png_init_io(png, file.get());
    png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(height);
    for (int y = 0; y < height; ++y) {
      rows[y] = const_cast<uint8_t*>(pixels.data() + static_cast<size_t>(y) * width * 3);
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
}

std::vector<uint16_t> read_gray16_checked(const std::filesystem::path& path, int* width,
                                          int* height) {
  PngRaster raster = read_png(path);
  if (raster.bit_depth != 16 || raster.channels != 1) {
    throw FormatError(path.string() + ": expected 16-bit single-channel PNG, got " +
                      std::to_string(raster.bit_depth) + "-bit " +
                      std::to_string(raster.channels) + "-channel");
  }
  *width = raster.width;
  *height = raster.height;
  return std::move(raster.pixels16);
}

}  // namespace

DepthMap load_depth_png(const std::filesystem::path& path) {
  int width = 0, height = 0;
  const std::vector<uint16_t> raw = read_gray16_checked(path, &width, &height);
  DepthMap out(width, height, 0.0);
  for (size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / 256.0;
  return out;
}

void save_depth_png(const DepthMap& depth, const std::filesystem::path& path) {
  std::vector<uint16_t> raw(depth.size());
  for (size_t i = 0; i < depth.size(); ++i) {
    const double scaled = std::round(depth[i] * 256.0);
    raw[i] = static_cast<uint16_t>(std::clamp(scaled, 0.0, 65535.0));
  }
  write_png16_gray(path, depth.width(), depth.height(), raw);
}

Grid load_confidence_png(const std::filesystem::path& path) {
  int width = 0, height = 0;
  const std::vector<uint16_t> raw = read_gray16_checked(path, &width, &height);
  Grid out(width, height, 0.0);
  for (size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / 65535.0;
  return out;
}

void save_confidence_png(const Grid& confidence, const std::filesystem::path& path) {
  std::vector<uint16_t> raw(confidence.size());
  for (size_t i = 0; i < confidence.size(); ++i) {
    const double scaled = std::round(confidence[i] * 65535.0);
    raw[i] = static_cast<uint16_t>(std::clamp(scaled, 0.0, 65535.0));
  }
  write_png16_gray(path, confidence.width(), confidence.height(), raw);
}

Image load_image_png(const std::filesystem::path& path) {
  PngRaster raster = read_png(path);
  if (raster.bit_depth != 8 || raster.channels != 3) {
    throw FormatError(path.string() + ": expected 8-bit RGB PNG, got " +
                      std::to_string(raster.bit_depth) + "-bit " +
                      std::to_string(raster.channels) + "-channel");
  }
  Image out(raster.width, raster.height, 0.0);
  for (size_t i = 0; i < raster.pixels8.size(); ++i) {
    out.data()[i] = raster.pixels8[i] / 255.0;
  }
  return out;
}

void save_image_png(const Image& image, const std::filesystem::path& path) {
  std::vector<uint8_t> raw(image.size());
  for (size_t i = 0; i < image.size(); ++i) {
    const double scaled = std::round(std::clamp(image.data()[i], 0.0, 1.0) * 255.0);
    raw[i] = static_cast<uint8_t>(scaled);
  }
  write_png8_rgb(path, image.width(), image.height(), raw);
}

PointCloud load_velodyne_bin(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary | std::ios::ate);
  if (!file) throw FormatError("cannot open " + path.string());
  const std::streamsize bytes = file.tellg();
  if (bytes % 16 != 0) {
    throw FormatError(path.string() + ": truncated record at byte offset " +
                      std::to_string((bytes / 16) * 16) + " (file has " +
                      std::to_string(bytes) + " bytes, expected multiple of 16)");
  }
  file.seekg(0);
  const size_t count = static_cast<size_t>(bytes) / 16;
  std::vector<float> raw(count * 4);
  if (count > 0) {
    file.read(reinterpret_cast<char*>(raw.data()), bytes);
    if (!file) throw FormatError(path.string() + ": short read");
  }
  PointCloud cloud;
  cloud.points.reserve(count);
  cloud.reflectance.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    cloud.points.emplace_back(raw[4 * i + 0], raw[4 * i + 1], raw[4 * i + 2]);
    cloud.reflectance.push_back(raw[4 * i + 3]);
  }
  return cloud;
}

void save_velodyne_bin(const PointCloud& cloud, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw FormatError("cannot open for writing " + path.string());
  std::vector<float> raw;
  raw.reserve(cloud.size() * 4);
  for (size_t i = 0; i < cloud.size(); ++i) {
    raw.push_back(static_cast<float>(cloud.points[i].x()));
    raw.push_back(static_cast<float>(cloud.points[i].y()));
    raw.push_back(static_cast<float>(cloud.points[i].z()));
    raw.push_back(cloud.has_reflectance() ? cloud.reflectance[i] : 0.0f);
  }
  if (!raw.empty()) {
    file.write(reinterpret_cast<const char*>(raw.data()),
               static_cast<std::streamsize>(raw.size() * sizeof(float)));
  }
  if (!file) throw FormatError(path.string() + ": write failed");
}

namespace {

std::vector<double> parse_calib_row(const std::string& key, const std::string& rest,
                                    size_t expected) {
  std::istringstream stream(rest);
  std::vector<double> values;
  double v;
  while (stream >> v) values.push_back(v);
  if (values.size() != expected) {
    throw FormatError("calib: row " + key + " expected " + std::to_string(expected) +
                      " values, got " + std::to_string(values.size()));
  }
  return values;
}

}  // namespace

Calibration load_calib(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw FormatError("cannot open " + path.string());

  std::vector<double> p2, r0, tr;
  std::string line;
  while (std::getline(file, line)) {
    const size_t colon = line.find(':');
    if (colon == std::string::npos) continue;
    std::string key = line.substr(0, colon);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    const std::string rest = line.substr(colon + 1);
    if (key == "P2") {
      p2 = parse_calib_row(key, rest, 12);
    } else if (key == "R0_rect" || key == "R_rect") {
      r0 = parse_calib_row(key, rest, 9);
    } else if (key == "Tr_velo_to_cam") {
      tr = parse_calib_row(key, rest, 12);
    }
  }
  if (p2.empty()) throw FormatError("calib: missing key P2");
  if (r0.empty()) throw FormatError("calib: missing key R0_rect");
  if (tr.empty()) throw FormatError("calib: missing key Tr_velo_to_cam");

  Calibration calib;
  calib.intrinsics.fx = p2[0];
  calib.intrinsics.cx = p2[2];
  calib.intrinsics.fy = p2[5];
  calib.intrinsics.cy = p2[6];
  calib.intrinsics.validate();

  Eigen::Matrix3d rect;
  rect << r0[0], r0[1], r0[2], r0[3], r0[4], r0[5], r0[6], r0[7], r0[8];
  Pose velo_to_cam;
  velo_to_cam.rotation << tr[0], tr[1], tr[2], tr[4], tr[5], tr[6], tr[8], tr[9], tr[10];
  velo_to_cam.translation << tr[3], tr[7], tr[11];

  calib.lidar_to_camera.rotation = rect * velo_to_cam.rotation;
  calib.lidar_to_camera.translation = rect * velo_to_cam.translation;
  if (!calib.lidar_to_camera.is_rigid(1e-3)) {
    throw FormatError("calib: R0_rect * Tr_velo_to_cam is not a rigid transform");
  }
  return calib;
}

void save_calib(const Calibration& calib, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw FormatError("cannot open for writing " + path.string());
  file.precision(17);
  file << "P2:";
  const double p2[12] = {calib.intrinsics.fx, 0, calib.intrinsics.cx, 0,
                         0, calib.intrinsics.fy, calib.intrinsics.cy, 0,
                         0, 0, 1, 0};
  for (double v : p2) file << ' ' << v;
  file << "\nR0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam:";
  const Eigen::Matrix3d& r = calib.lidar_to_camera.rotation;
  const Eigen::Vector3d& t = calib.lidar_to_camera.translation;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) file << ' ' << r(row, col);
    file << ' ' << t[row];
  }
  file << '\n';
  if (!file) throw FormatError(path.string() + ": write failed");
}

void export_pseudolidar(const DepthMap& depth, const Image* image,
                        const CameraIntrinsics& intrinsics,
                        const std::filesystem::path& path, PseudoLidarFormat format) {
  intrinsics.validate();
  if (image != nullptr &&
      (image->width() != depth.width() || image->height() != depth.height())) {
    throw std::invalid_argument("export_pseudolidar: image shape differs");
  }

  const XYZMap xyz = backproject(depth, intrinsics);
  if (format == PseudoLidarFormat::kVelodyneBin) {
    PointCloud cloud;
    for (int y = 0; y < depth.height(); ++y) {
      for (int x = 0; x < depth.width(); ++x) {
        if (!xyz.valid.at(x, y)) continue;
        cloud.points.push_back(xyz.at(x, y));
        cloud.reflectance.push_back(0.0f);
      }
    }
    save_velodyne_bin(cloud, path);
    return;
  }

  std::ofstream file(path, std::ios::trunc);
  if (!file) throw FormatError("cannot open for writing " + path.string());
  size_t count = 0;
  for (size_t i = 0; i < xyz.valid.size(); ++i) count += xyz.valid[i];
  file << "ply\nformat ascii 1.0\nelement vertex " << count
       << "\nproperty float x\nproperty float y\nproperty float z\n";
  if (image != nullptr) {
    file << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  file << "end_header\n";
  file.precision(9);
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!xyz.valid.at(x, y)) continue;
      const Eigen::Vector3d& p = xyz.at(x, y);
      file << p.x() << ' ' << p.y() << ' ' << p.z();
      if (image != nullptr) {
        for (int c = 0; c < 3; ++c) {
          file << ' '
               << static_cast<int>(std::round(std::clamp(image->at(x, y, c), 0.0, 1.0) * 255.0));
        }
      }
      file << '\n';
    }
  }
  if (!file) throw FormatError(path.string() + ": write failed");
}

PointCloud load_ply(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(file, line) || line != "ply") {
    throw FormatError(path.string() + ": missing ply magic");
  }
  size_t vertex_count = 0;
  bool ascii = false;
  std::vector<std::string> properties;
  while (std::getline(file, line)) {
    std::istringstream stream(line);
    std::string word;
    stream >> word;
    if (word == "format") {
      std::string kind;
      stream >> kind;
      ascii = kind == "ascii";
    } else if (word == "element") {
      std::string name;
      stream >> name >> vertex_count;
      if (name != "vertex") {
        throw FormatError(path.string() + ": unsupported element " + name);
      }
    } else if (word == "property") {
      std::string type, name;
      stream >> type >> name;
      properties.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw FormatError(path.string() + ": only ascii ply is supported");
  if (properties.size() < 3 || properties[0] != "x" || properties[1] != "y" ||
      properties[2] != "z") {
    throw FormatError(path.string() + ": vertex properties must start with x y z");
  }

  PointCloud cloud;
  cloud.points.reserve(vertex_count);
  for (size_t i = 0; i < vertex_count; ++i) {
    if (!std::getline(file, line)) {
      throw FormatError(path.string() + ": vertex list ends early at " +
                        std::to_string(i) + " of " + std::to_string(vertex_count));
    }
    std::istringstream stream(line);
    double x, y, z;
    if (!(stream >> x >> y >> z)) {
      throw FormatError(path.string() + ": malformed vertex line " + std::to_string(i));
    }
    cloud.points.emplace_back(x, y, z);
  }
  return cloud;
}

std::vector<Pose> load_poses_txt(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw FormatError("cannot open " + path.string());
  std::vector<Pose> poses;
  std::string line;
  size_t line_no = 0;
  while (std::getline(file, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream stream(line);
    std::vector<double> v;
    double value;
    while (stream >> value) v.push_back(value);
    if (v.size() != 12) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                        " has " + std::to_string(v.size()) + " values, expected 12");
    }
    Pose pose;
    pose.rotation << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    pose.translation << v[3], v[7], v[11];
    if (!pose.is_rigid(1e-6)) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) +
                        " is not a rigid transform");
    }
    poses.push_back(pose);
  }
  return poses;
}

void save_poses_txt(const std::vector<Pose>& poses, const std::filesystem::path& path) {
  std::ofstream file(path, std::ios::trunc);
  if (!file) throw FormatError("cannot open for writing " + path.string());
  file.precision(17);
  for (const Pose& pose : poses) {
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 3; ++col) {
        file << pose.rotation(row, col) << ' ';
      }
      file << pose.translation[row];
      file << (row == 2 ? '\n' : ' ');
    }
  }
  if (!file) throw FormatError(path.string() + ": write failed");
}

Pose lidar_axes_to_camera() {
  Pose pose;
  pose.rotation << 0, -1, 0, 0, 0, -1, 1, 0, 0;
  return pose;
}

}  // namespace fusionkit
