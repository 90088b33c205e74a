#pragma once

#include <cstdint>
#include <vector>

#include "voxmae/voxelizer.hpp"

namespace voxmae::masking {

using voxelizer::VoxelIndex;
using voxelizer::VoxelizedCloud;

// Index sets are kept in ascending grid order.
struct MaskPlan {
  std::vector<VoxelIndex> visible;
  std::vector<VoxelIndex> masked_nonempty;
  std::vector<VoxelIndex> sampled_empty;
  double ratio = 0;
  double empty_fraction = 0;
  std::uint64_t seed = 0;
};

// floor(fraction * n), robust to the representation error of fractions
// such as 0.7.
std::size_t fraction_count(double fraction, std::size_t n);

// Uniform sampling without replacement of floor(ratio * occupied) voxels
// to hide and floor(empty_fraction * empty) empty cells as decoys.
MaskPlan plan_mask(const VoxelizedCloud& vc, double ratio, double empty_fraction, std::uint64_t seed);

// Keeps a uniform random subset of at most max_empty decoys.
MaskPlan plan_cap(const MaskPlan& plan, std::size_t max_empty);

// k distinct positions out of [0, n), ascending.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, std::uint64_t seed);

}  // namespace voxmae::masking
