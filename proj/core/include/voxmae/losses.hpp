#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "voxmae/numcore/tape.hpp"

namespace voxmae::losses {

using numcore::Tape;
using numcore::Var;
using Point3 = std::array<double, 3>;

// ---- Chamfer ---------------------------------------------------------------

// Mean squared nearest-neighbor distance from pred to gt plus the same
// from gt to pred. Nearest-neighbor ties go to the lowest index.
double chamfer_voxel(std::span<const Point3> pred, std::span<const Point3> gt);

struct ChamferGrad {
  double value = 0;
  std::vector<Point3> d_pred;
};
ChamferGrad chamfer_voxel_grad(std::span<const Point3> pred, std::span<const Point3> gt);

enum class Aggregation { sum, mean };

double chamfer_total(std::span<const double> per_voxel, Aggregation aggregation);

// Uniform random subset of at most `cap` points, input order preserved.
std::vector<Point3> subsample(std::span<const Point3> points, std::size_t cap, std::uint64_t seed);

struct ChamferTarget {
  std::size_t row = 0;      // token row in the point-head output
  std::vector<Point3> gt;   // voxel-local normalized frame, non-empty
};

// points: [N, 3n] head output. Zero when there are no targets.
template <typename T>
Var chamfer_loss(Tape<T>& tape, Var points, std::span<const ChamferTarget> targets, Aggregation aggregation);

// ---- point count -------------------------------------------------------------

// Smooth L1 with unit transition.
double count_loss(double n_hat, double n_true);

struct CountTarget {
  std::size_t row = 0;
  double count = 0;
};

// Mean over targets; zero when there are none.
template <typename T>
Var count_loss(Tape<T>& tape, Var counts, std::span<const CountTarget> targets);

// ---- occupancy ---------------------------------------------------------------

// max(z, 0) - z*y + log1p(exp(-|z|))
double bce_with_logit(double logit, double label);

struct OccupancyTarget {
  std::size_t row = 0;
  double label = 0;  // 1 = non-empty, 0 = empty decoy
};

// Mean over targets; rejects an empty target set.
template <typename T>
Var occupancy_loss(Tape<T>& tape, Var logits, std::span<const OccupancyTarget> targets);

double occupancy_loss(std::span<const double> logits, std::span<const double> labels);

// ---- combination -------------------------------------------------------------

struct LossWeights {
  double alpha_c = 1.0;
  double alpha_np = 0.1;
  double alpha_occ = 1.0;

  void validate() const;
};

struct LossToggles {
  bool chamfer = true;
  bool count = true;
  bool occupancy = true;

  void validate() const;
};

struct LossReport {
  double chamfer = 0;
  double count = 0;
  double occupancy = 0;
  double total = 0;
  LossToggles enabled;
};

LossReport total_loss(double chamfer, double count, double occupancy, const LossWeights& weights,
                      const LossToggles& enabled);

template <typename T>
struct WeightedLoss {
  Var total;
  LossReport report;
};

// Disabled terms are skipped entirely and pass no gradient.
template <typename T>
WeightedLoss<T> combine_losses(Tape<T>& tape, std::optional<Var> chamfer, std::optional<Var> count,
                               std::optional<Var> occupancy, const LossWeights& weights, const LossToggles& enabled);

}  // namespace voxmae::losses
