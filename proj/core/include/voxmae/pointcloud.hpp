#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace voxmae::pointcloud {

using Vec3 = std::array<double, 3>;

struct Point {
  float x = 0, y = 0, z = 0;
  float intensity = 0;  // meaningful only when the cloud has intensity

  double operator[](std::size_t k) const { return k == 0 ? x : (k == 1 ? y : z); }
  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;
  bool has_intensity = false;
  std::string source;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Little-endian float32 records of (x, y, z[, intensity[, ring]]), no
// header. Fields past intensity are read and discarded.
PointCloud load_bin(const std::filesystem::path& path, int floats_per_point);

// Writes stride 4 when the cloud has intensity, stride 3 otherwise.
void save_bin(const PointCloud& cloud, const std::filesystem::path& path);

struct SceneSpec {
  int ring_count = 8;
  double max_range = 50.0;
  int azimuth_steps = 180;  // ground returns per ring; the density knob
  int object_count = 4;
  double object_min_size = 1.5;  // footprint edge, meters
  double object_max_size = 4.0;
  double object_min_height = 1.0;
  double object_max_height = 2.5;
  double object_point_spacing = 0.25;
  double ground_noise_sigma = 0.02;
  bool with_intensity = true;
  std::uint64_t seed = 0;

  void validate() const;
};

// Concentric ground rings at radii k * max_range / ring_count plus
// ground-standing axis-aligned boxes sampled on their side faces and top.
// Pure function of the spec.
PointCloud generate_scene(const SceneSpec& spec);

// Keeps points with range_min <= p < range_max on every axis.
PointCloud crop_to_range(const PointCloud& cloud, const Vec3& range_min, const Vec3& range_max);

}  // namespace voxmae::pointcloud
