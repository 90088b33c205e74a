#pragma once

#include <filesystem>

#include "voxmae/pointcloud.hpp"

namespace voxmae::ply {

// ASCII PLY with one vertex element of float x y z [intensity]. Values are
// printed with 9 significant digits, so float coordinates round-trip.
void write_ply(const pointcloud::PointCloud& cloud, const std::filesystem::path& path);

// Reads files written by write_ply and other ASCII PLY files whose vertex
// element starts with x y z; extra vertex properties other than intensity
// are ignored. Other elements must come after the vertices.
pointcloud::PointCloud read_ply(const std::filesystem::path& path);

}  // namespace voxmae::ply
