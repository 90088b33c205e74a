#include "voxmae/masking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "voxmae/random.hpp"

namespace voxmae::masking {
namespace {

constexpr std::uint64_t kNonEmptyStream = 1;
constexpr std::uint64_t kEmptyStream = 2;
constexpr std::uint64_t kCapStream = 3;

void check_fraction(double f, const char* what) {
  if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument(std::string(what) + " must be in [0, 1]");
}

}  // namespace

std::size_t fraction_count(double fraction, std::size_t n) {
  const double exact = fraction * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::floor(exact + 1e-9 * std::max(1.0, exact)));
  return std::min(k, n);
}

std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) throw std::invalid_argument("sample_without_replacement: k > n");
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

MaskPlan plan_mask(const VoxelizedCloud& vc, double ratio, double empty_fraction, std::uint64_t seed) {
  check_fraction(ratio, "mask ratio");
  check_fraction(empty_fraction, "empty fraction");
  MaskPlan plan;
  plan.ratio = ratio;
  plan.empty_fraction = empty_fraction;
  plan.seed = seed;

  const std::size_t occupied = vc.voxels.size();
  const auto hidden = sample_without_replacement(occupied, fraction_count(ratio, occupied), mix(seed, kNonEmptyStream));
  std::size_t h = 0;
  for (std::size_t i = 0; i < occupied; ++i) {
    if (h < hidden.size() && hidden[h] == i) {
      plan.masked_nonempty.push_back(vc.voxels[i].index);
      ++h;
    } else {
      plan.visible.push_back(vc.voxels[i].index);
    }
  }

  if (empty_fraction > 0) {
    const auto empty = voxelizer::empty_indices(vc);
    const auto picks = sample_without_replacement(empty.cells.size(), fraction_count(empty_fraction, empty.cells.size()),
                                                  mix(seed, kEmptyStream));
    plan.sampled_empty.reserve(picks.size());
    for (auto i : picks) plan.sampled_empty.push_back(empty.cells[i]);
  }
  return plan;
}

MaskPlan plan_cap(const MaskPlan& plan, std::size_t max_empty) {
  if (plan.sampled_empty.size() <= max_empty) return plan;
  MaskPlan out = plan;
  const auto keep = sample_without_replacement(plan.sampled_empty.size(), max_empty, mix(plan.seed, kCapStream));
  out.sampled_empty.clear();
  for (auto i : keep) out.sampled_empty.push_back(plan.sampled_empty[i]);
  return out;
}

}  // namespace voxmae::masking
