#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "voxmae/config.hpp"
#include "voxmae/model/model.hpp"
#include "voxmae/pointcloud.hpp"
#include "voxmae/train/checkpoint.hpp"

namespace voxmae::train {

struct VoxelPrediction {
  voxelizer::VoxelIndex index;
  model::TokenKind kind = model::TokenKind::visible;
  std::size_t true_count = 0;
  double predicted_count = 0;
  double occupancy_probability = 0;
};

struct ExportBundle {
  pointcloud::PointCloud masked;         // points of the visible voxels
  pointcloud::PointCloud reconstructed;  // n predicted points per non-empty voxel
  pointcloud::PointCloud truth;          // in-range input points
  std::vector<VoxelPrediction> voxels;   // decoder token order
  // Voxel each reconstructed point belongs to, parallel to reconstructed.points.
  std::vector<voxelizer::VoxelIndex> reconstructed_voxel;
};

// Eval-mode forward (no token dropping) with the configured mask ratio,
// decoy fraction and decoy cap.
ExportBundle reconstruct(const config::RunConfig& config, model::ModelParams<float>& params,
                         const pointcloud::PointCloud& cloud, std::uint64_t mask_seed);

// Loads parameters from a checkpoint. When `expected` is given its
// architecture must match the checkpoint's; the error names both digests.
ExportBundle reconstruct(const Checkpoint& ck, const config::RunConfig* expected, const pointcloud::PointCloud& cloud,
                         std::uint64_t mask_seed);

// masked.ply, reconstructed.ply, truth.ply, voxels.csv
void write_bundle(const ExportBundle& bundle, const std::filesystem::path& dir);

}  // namespace voxmae::train
