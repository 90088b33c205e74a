#include "voxmae/model/windows.hpp"

#include <algorithm>
#include <stdexcept>

#include "voxmae/masking.hpp"
#include "voxmae/random.hpp"

namespace voxmae::model {
namespace {

std::int32_t floor_div(std::int32_t a, std::int32_t b) {
  std::int32_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

void check_levels(const std::vector<std::size_t>& levels, const char* which) {
  if (levels.empty()) throw std::invalid_argument(std::string("padding levels (") + which + ") empty");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] == 0 || (i && levels[i] <= levels[i - 1]))
      throw std::invalid_argument(std::string("padding levels (") + which + ") must be positive and strictly ascending");
  }
}

}  // namespace

WindowId window_of(const VoxelIndex& index, const WindowExtent& extent, bool shifted) {
  const std::int32_t ox = shifted ? extent[0] / 2 : 0;
  const std::int32_t oy = shifted ? extent[1] / 2 : 0;
  return {floor_div(index.x + ox, extent[0]), floor_div(index.y + oy, extent[1])};
}

WindowPartition partition(std::span<const VoxelIndex> tokens, const WindowExtent& extent, bool shifted) {
  if (extent[0] <= 0 || extent[1] <= 0) throw std::invalid_argument("partition: window extent must be positive");
  WindowPartition p;
  p.extent = extent;
  p.shifted = shifted;
  for (std::size_t i = 0; i < tokens.size(); ++i) p.groups[window_of(tokens[i], extent, shifted)].push_back(i);
  return p;
}

void PaddingLevels::validate() const {
  check_levels(train, "train");
  check_levels(eval, "eval");
}

std::size_t level_for(std::size_t count, std::span<const std::size_t> levels) {
  for (auto l : levels)
    if (l >= count) return l;
  return levels.back();
}

std::size_t PaddedWindow::padding() const {
  return static_cast<std::size_t>(std::count(pad_mask.begin(), pad_mask.end(), std::uint8_t{1}));
}

std::vector<std::vector<std::int64_t>> PaddedBatch::slot_groups() const {
  std::vector<std::vector<std::int64_t>> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(w.slots);
  return out;
}

PaddedBatch bucket_and_pad(const WindowPartition& partition, const PaddingLevels& levels, bool train_mode,
                           std::uint64_t seed) {
  levels.validate();
  const auto& lv = train_mode ? levels.train : levels.eval;
  PaddedBatch batch;
  std::uint64_t window_no = 0;
  for (const auto& [id, members] : partition.groups) {
    PaddedWindow w;
    w.id = id;
    std::vector<std::size_t> kept = members;
    const std::size_t top = lv.back();
    if (members.size() > top) {
      if (train_mode) {
        const auto keep = masking::sample_without_replacement(members.size(), top, mix(seed, window_no));
        kept.clear();
        std::size_t k = 0;
        for (std::size_t i = 0; i < members.size(); ++i) {
          if (k < keep.size() && keep[k] == i) {
            kept.push_back(members[i]);
            ++k;
          } else {
            w.dropped.push_back(members[i]);
          }
        }
        w.level = top;
      } else {
        w.level = members.size();
      }
    } else {
      w.level = level_for(members.size(), lv);
    }
    w.slots.assign(w.level, -1);
    w.pad_mask.assign(w.level, 1);
    for (std::size_t i = 0; i < kept.size(); ++i) {
      w.slots[i] = static_cast<std::int64_t>(kept[i]);
      w.pad_mask[i] = 0;
    }
    batch.dropped_total += w.dropped.size();
    batch.buckets[w.level].push_back(batch.windows.size());
    batch.windows.push_back(std::move(w));
    ++window_no;
  }
  return batch;
}

}  // namespace voxmae::model
