#include "voxmae/voxelizer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace voxmae::voxelizer {

GridShape GridConfig::shape() const {
  std::array<std::int32_t, 3> n{};
  for (int k = 0; k < 3; ++k) {
    if (!(voxel_size[k] > 0)) throw std::invalid_argument("GridConfig: voxel_size must be positive");
    const double extent = range_max[k] - range_min[k];
    if (!(extent > 0)) throw std::invalid_argument("GridConfig: range_min must be < range_max");
    const double cells = std::round(extent / voxel_size[k]);
    if (cells < 1 || std::abs(cells * voxel_size[k] - extent) > 1e-9) {
      throw std::invalid_argument("GridConfig: extent " + std::to_string(extent) + " on axis " + std::to_string(k) +
                                  " is not a whole number of " + std::to_string(voxel_size[k]) + " m voxels");
    }
    n[k] = static_cast<std::int32_t>(cells);
  }
  return {n[0], n[1], n[2]};
}

std::int64_t GridConfig::linear(const VoxelIndex& i) const { return shape().linear(i); }

VoxelIndex GridConfig::unlinear(std::int64_t id) const { return shape().unlinear(id); }

bool GridConfig::contains(const VoxelIndex& i) const {
  const auto s = shape();
  return i.x >= 0 && i.y >= 0 && i.z >= 0 && i.x < s.x && i.y < s.y && i.z < s.z;
}

namespace {

std::optional<VoxelIndex> index_with_shape(const Point& p, const GridConfig& grid, const GridShape& s) {
  const std::int32_t ext[3] = {s.x, s.y, s.z};
  std::int32_t out[3];
  for (std::size_t k = 0; k < 3; ++k) {
    const double v = p[k];
    if (!(v >= grid.range_min[k] && v < grid.range_max[k])) return std::nullopt;
    auto idx = static_cast<std::int64_t>(std::floor((v - grid.range_min[k]) / grid.voxel_size[k]));
    // v < range_max but the division rounded up onto the boundary.
    idx = std::clamp<std::int64_t>(idx, 0, ext[k] - 1);
    out[k] = static_cast<std::int32_t>(idx);
  }
  return VoxelIndex{out[0], out[1], out[2]};
}

}  // namespace

std::optional<VoxelIndex> voxel_index(const Point& p, const GridConfig& grid) {
  return index_with_shape(p, grid, grid.shape());
}

Vec3 voxel_center(const VoxelIndex& index, const GridConfig& grid) {
  if (!grid.contains(index)) {
    throw std::out_of_range("voxel_center: index (" + std::to_string(index.x) + "," + std::to_string(index.y) + "," +
                            std::to_string(index.z) + ") outside the grid");
  }
  const std::int32_t i[3] = {index.x, index.y, index.z};
  Vec3 c;
  for (int k = 0; k < 3; ++k) c[k] = grid.range_min[k] + (i[k] + 0.5) * grid.voxel_size[k];
  return c;
}

const Voxel* VoxelizedCloud::find(const VoxelIndex& index) const {
  const GridShape s = grid.shape();
  const std::int64_t id = s.linear(index);
  auto it = std::lower_bound(voxels.begin(), voxels.end(), id,
                             [&](const Voxel& v, std::int64_t key) { return s.linear(v.index) < key; });
  if (it == voxels.end() || it->index != index) return nullptr;
  return &*it;
}

std::size_t VoxelizedCloud::point_count() const {
  std::size_t n = 0;
  for (const auto& v : voxels) n += v.points.size();
  return n;
}

VoxelizedCloud voxelize(const PointCloud& cloud, const GridConfig& grid) {
  const GridShape s = grid.shape();
  VoxelizedCloud vc;
  vc.grid = grid;
  vc.has_intensity = cloud.has_intensity;
  vc.report.input_points = cloud.size();
  std::unordered_map<std::int64_t, std::size_t> slot;
  std::vector<std::pair<std::int64_t, Voxel>> staged;
  for (const auto& p : cloud.points) {
    auto idx = index_with_shape(p, grid, s);
    if (!idx) {
      ++vc.report.dropped;
      continue;
    }
    ++vc.report.in_range;
    const std::int64_t id = s.linear(*idx);
    auto [it, inserted] = slot.try_emplace(id, staged.size());
    if (inserted) staged.push_back({id, Voxel{*idx, {}}});
    staged[it->second].second.points.push_back(p);
  }
  std::sort(staged.begin(), staged.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  vc.voxels.reserve(staged.size());
  for (auto& [id, v] : staged) vc.voxels.push_back(std::move(v));
  return vc;
}

EmptyCells empty_indices(const VoxelizedCloud& vc) {
  const GridShape s = vc.grid.shape();
  EmptyCells out;
  out.count = s.cells() - static_cast<std::int64_t>(vc.voxels.size());
  out.cells.reserve(static_cast<std::size_t>(out.count));
  std::size_t next = 0;
  for (std::int64_t id = 0; id < s.cells(); ++id) {
    if (next < vc.voxels.size() && s.linear(vc.voxels[next].index) == id) {
      ++next;
      continue;
    }
    out.cells.push_back(s.unlinear(id));
  }
  return out;
}

}  // namespace voxmae::voxelizer
