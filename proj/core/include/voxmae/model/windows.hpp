#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "voxmae/voxelizer.hpp"

namespace voxmae::model {

using voxelizer::VoxelIndex;

struct WindowId {
  std::int32_t x = 0, y = 0;
  friend auto operator<=>(const WindowId&, const WindowId&) = default;
};

using WindowExtent = std::array<std::int32_t, 2>;

// Unshifted: floor(i / extent). Shifted: floor((i + extent/2) / extent).
WindowId window_of(const VoxelIndex& index, const WindowExtent& extent, bool shifted);

struct WindowPartition {
  WindowExtent extent{16, 16};
  bool shifted = false;
  std::map<WindowId, std::vector<std::size_t>> groups;  // token positions, input order
};

WindowPartition partition(std::span<const VoxelIndex> tokens, const WindowExtent& extent, bool shifted);

struct PaddingLevels {
  std::vector<std::size_t> train{30, 60, 100, 200, 250};
  std::vector<std::size_t> eval{30, 60, 100, 200, 256};

  void validate() const;
};

// Smallest level >= count, or the top level when count exceeds it.
std::size_t level_for(std::size_t count, std::span<const std::size_t> levels);

struct PaddedWindow {
  WindowId id;
  std::size_t level = 0;
  std::vector<std::int64_t> slots;     // token position, or -1 for padding
  std::vector<std::uint8_t> pad_mask;  // 1 where slots[i] == -1
  std::vector<std::size_t> dropped;    // tokens cut by the top train level

  std::size_t real_count() const { return slots.size() - padding(); }
  std::size_t padding() const;
};

struct PaddedBatch {
  std::vector<PaddedWindow> windows;                      // partition order
  std::map<std::size_t, std::vector<std::size_t>> buckets;  // level -> windows
  std::size_t dropped_total = 0;

  std::vector<std::vector<std::int64_t>> slot_groups() const;
};

// Pads every window to its level. In train mode a window above the top
// level keeps a uniform random subset of top-level size; in eval mode
// nothing is dropped and an oversized window is padded to its own count.
PaddedBatch bucket_and_pad(const WindowPartition& partition, const PaddingLevels& levels, bool train_mode,
                           std::uint64_t seed);

}  // namespace voxmae::model
