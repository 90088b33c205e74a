#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "voxmae/config.hpp"
#include "voxmae/losses.hpp"
#include "voxmae/masking.hpp"
#include "voxmae/model/model.hpp"
#include "voxmae/train/checkpoint.hpp"
#include "voxmae/train/optim.hpp"
#include "voxmae/voxelizer.hpp"

namespace voxmae::train {

// Point clouds of the training set, voxelized once.
struct Dataset {
  std::vector<voxelizer::VoxelizedCloud> scenes;
  std::vector<std::string> names;
};

// Synthetic scene i uses seed mix(scene_seed, i).
pointcloud::SceneSpec scene_spec_for(const config::DataSettings& data, std::size_t index);

Dataset build_dataset(const config::DataSettings& data, const voxelizer::GridConfig& grid);

// *.bin files of a directory in lexicographic order.
std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir);

// Targets of one scene, in the row order of the decoder tokens (visible,
// masked non-empty, sampled empty). Point targets are in the voxel-local
// normalized frame (p - center) / (voxel_size / 2).
struct SceneTargets {
  std::vector<losses::ChamferTarget> chamfer;
  std::vector<losses::CountTarget> count;
  std::vector<losses::OccupancyTarget> occupancy;
};

SceneTargets build_targets(const voxelizer::VoxelizedCloud& vc, const masking::MaskPlan& plan,
                           std::size_t max_gt_points, std::uint64_t seed);

pointcloud::Vec3 to_local(const pointcloud::Point& p, const voxelizer::VoxelIndex& voxel,
                          const voxelizer::GridConfig& grid);
pointcloud::Vec3 to_world(const pointcloud::Vec3& local, const voxelizer::VoxelIndex& voxel,
                          const voxelizer::GridConfig& grid);

struct StepStats {
  losses::LossReport loss;  // batch means
  double lr = 0;
  std::uint64_t occ_correct = 0, occ_labeled = 0;
  double count_abs_error = 0;
  std::uint64_t count_targets = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;   // 1-based
  std::int64_t step = 0;   // optimizer steps completed
  double lr = 0;           // rate of the last step
  double loss_total = 0, loss_chamfer = 0, loss_count = 0, loss_occ = 0;
  double occ_accuracy = 0;
  double count_mae = 0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const EpochMetrics& m);

class Trainer {
 public:
  explicit Trainer(const config::RunConfig& config);
  Trainer(const config::RunConfig& config, Dataset dataset);

  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::int64_t total_steps() const { return static_cast<std::int64_t>(steps_per_epoch_ * optim_.epochs); }
  std::int64_t iteration() const { return iteration_; }
  bool done() const { return iteration_ >= total_steps(); }
  const train::Schedule& schedule() const { return optim_.schedule; }

  // One optimizer step. Returns the completed epoch's metrics when the
  // step finishes an epoch.
  std::optional<EpochMetrics> step(StepStats* stats = nullptr);

  // Runs to the end. `on_epoch` sees every completed epoch in order.
  std::vector<EpochMetrics> run(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  Checkpoint checkpoint() const;
  void restore(const Checkpoint& ck);

  model::ModelParams<float>& params() { return params_; }
  const model::ModelParams<float>& params() const { return params_; }
  const OptimState& optimizer() const { return state_; }
  const Dataset& dataset() const { return dataset_; }

  // Scene order of an epoch (0-based), a seeded permutation.
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;
  std::uint64_t mask_seed(std::size_t epoch, std::size_t scene) const;

 private:
  config::RunConfig config_;
  voxelizer::GridConfig grid_;
  model::ModelConfig model_;
  config::MaskSettings mask_;
  config::LossSettings loss_;
  config::OptimSettings optim_;
  Dataset dataset_;
  std::size_t steps_per_epoch_ = 0;

  model::ModelParams<float> params_;
  OptimState state_;
  std::int64_t iteration_ = 0;
  EpochAccumulator acc_;
  std::size_t cached_epoch_ = static_cast<std::size_t>(-1);
  std::vector<std::size_t> cached_order_;
};

// Seed of the initial parameters for a run seed.
std::uint64_t init_seed(std::uint64_t run_seed);

}  // namespace voxmae::train
