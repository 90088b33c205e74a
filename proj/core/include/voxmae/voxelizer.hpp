#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "voxmae/pointcloud.hpp"

namespace voxmae::voxelizer {

using pointcloud::Point;
using pointcloud::PointCloud;
using pointcloud::Vec3;

struct VoxelIndex {
  std::int32_t x = 0, y = 0, z = 0;
  friend auto operator<=>(const VoxelIndex&, const VoxelIndex&) = default;
};

struct GridShape {
  std::int32_t x = 0, y = 0, z = 0;
  std::int64_t cells() const { return std::int64_t{x} * y * z; }
  std::int64_t linear(const VoxelIndex& i) const { return (std::int64_t{i.x} * y + i.y) * z + i.z; }
  VoxelIndex unlinear(std::int64_t id) const {
    return {static_cast<std::int32_t>(id / z / y), static_cast<std::int32_t>((id / z) % y),
            static_cast<std::int32_t>(id % z)};
  }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

struct GridConfig {
  Vec3 voxel_size{0.5, 0.5, 8.0};
  Vec3 range_min{-50.0, -50.0, -3.0};
  Vec3 range_max{50.0, 50.0, 5.0};

  // round((max - min) / size) per axis; throws if the extent is not a
  // whole number of voxels (within 1e-9 m) or the range is empty.
  GridShape shape() const;
  void validate() const { (void)shape(); }

  std::int64_t linear(const VoxelIndex& i) const;
  VoxelIndex unlinear(std::int64_t id) const;
  bool contains(const VoxelIndex& i) const;
};

// floor((p - min) / size) per axis, or nullopt outside the half-open range.
std::optional<VoxelIndex> voxel_index(const Point& p, const GridConfig& grid);

// range_min + (index + 0.5) * voxel_size; throws std::out_of_range for an
// index outside the grid.
Vec3 voxel_center(const VoxelIndex& index, const GridConfig& grid);

struct Voxel {
  VoxelIndex index;
  std::vector<Point> points;  // input order
};

struct VoxelizeReport {
  std::size_t input_points = 0;
  std::size_t in_range = 0;
  std::size_t dropped = 0;
};

// Occupied voxels sorted by linear index; every list non-empty.
struct VoxelizedCloud {
  GridConfig grid;
  bool has_intensity = false;
  std::vector<Voxel> voxels;
  VoxelizeReport report;

  std::size_t occupied_count() const { return voxels.size(); }
  const Voxel* find(const VoxelIndex& index) const;
  std::size_t point_count() const;
};

VoxelizedCloud voxelize(const PointCloud& cloud, const GridConfig& grid);

struct EmptyCells {
  std::int64_t count = 0;
  std::vector<VoxelIndex> cells;  // ascending linear order
};

EmptyCells empty_indices(const VoxelizedCloud& vc);

}  // namespace voxmae::voxelizer
