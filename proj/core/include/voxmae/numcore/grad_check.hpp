#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "voxmae/numcore/tape.hpp"

namespace voxmae::numcore {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so near-zero gradients are
  // compared absolutely.
  double floor = 1e-6;
  // 0 checks every entry; otherwise a seeded random subset of this size.
  std::size_t max_entries_per_parameter = 0;
  std::uint64_t seed = 0x5eed;
  std::string corrupt_prefix;  // negative controls only
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t checked = 0;
  bool finite = true;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  bool passed = true;
  double worst_rel_error = 0;
  std::string worst_name;

  std::string summary() const;
};

// `build` records a forward pass that reads the given parameters through
// tape.parameter(). Non-scalar outputs are contracted against fixed
// random weights, so the check covers a full vector-Jacobian product.
using GradCheckBuild = std::function<Var(Tape<double>&)>;

GradCheckReport grad_check(const GradCheckBuild& build, std::span<Parameter<double>* const> params,
                           const GradCheckOptions& options = {});

}  // namespace voxmae::numcore
