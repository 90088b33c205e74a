#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "voxmae/config.hpp"
#include "voxmae/numcore/grad_check.hpp"

namespace voxmae::train {

struct GradSuiteOptions {
  std::uint64_t seed = 0;
  std::size_t max_entries_per_parameter = 6;
  // Negates the backward pass of parameters with this name prefix, e.g.
  // "encoder.1.attn". Negative controls only.
  std::string corrupt_prefix;
};

struct GradSuiteSection {
  std::string name;
  numcore::GradCheckReport report;
};

struct GradSuiteReport {
  std::vector<GradSuiteSection> sections;
  bool passed = true;
  double worst_rel_error = 0;
  std::string worst;  // "section: parameter"

  std::string summary() const;
};

// Finite-difference checks in double precision. Sections:
//   op.*            each differentiable operation on random inputs
//   loss.*          each loss on random predictions
//   model.chamfer   full forward pass with only the Chamfer term
//   model.count     ... only the count term
//   model.occupancy ... only the occupancy term
//   model.total     all three terms with the configured weights
// The model architecture, grid, mask and loss settings come from `config`;
// the scene is a small synthetic one.
GradSuiteReport run_grad_suite(const config::RunConfig& config, const GradSuiteOptions& options = {});

}  // namespace voxmae::train
