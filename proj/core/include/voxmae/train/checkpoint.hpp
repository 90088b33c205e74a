#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "voxmae/model/model.hpp"
#include "voxmae/train/optim.hpp"

namespace voxmae::train {

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

// Progress through an epoch, so a resumed run logs the same metrics as an
// uninterrupted one.
struct EpochAccumulator {
  std::uint64_t steps = 0;
  double loss_total = 0, loss_chamfer = 0, loss_count = 0, loss_occ = 0;
  std::uint64_t occ_correct = 0, occ_labeled = 0;
  double count_abs_error = 0;
  std::uint64_t count_targets = 0;
};

// Layout, all little-endian:
//   "VOXMAECK" u32 version
//   u64 len, config text
//   i64 iteration, i64 optimizer step, u64 run seed
//   accumulator: u64 steps, f64 x4, u64 x2, f64, u64
//   u32 tensor count, then per tensor:
//     u32 len, name, u32 rank, u64 dims[rank], f32 data[]
// Parameters are stored as "param/<name>", moments as "adam.m/<name>" and
// "adam.v/<name>". Every sampled quantity in training is a function of
// (run seed, iteration), so this is the complete RNG state.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string config_text;
  std::int64_t iteration = 0;
  std::int64_t optimizer_step = 0;
  std::uint64_t run_seed = 0;
  EpochAccumulator epoch;
  std::vector<NamedTensor> tensors;

  const Tensor<float>* find(std::string_view name) const;
};

std::string serialize(const Checkpoint& ck);
Checkpoint deserialize(std::string_view bytes);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Fills tensors from the model and optimizer.
void store_state(Checkpoint& ck, const model::ModelParams<float>& params, const OptimState& optim);

// Copies tensors back; every parameter must be present with its shape.
void restore_state(const Checkpoint& ck, model::ModelParams<float>& params, OptimState& optim);

}  // namespace voxmae::train
