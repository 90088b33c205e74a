#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "voxmae/numcore/tensor.hpp"

namespace voxmae::train {

using numcore::Parameter;
using numcore::Tensor;

// Linear warmup from warmup_start_lr to peak_lr over warmup_iters, then
// cosine annealing to final_lr at total_iters.
struct Schedule {
  double warmup_start_lr = 5e-5;
  double peak_lr = 5e-4;
  std::int64_t warmup_iters = 1000;
  double final_lr = 1e-7;
  std::int64_t total_iters = 1000;

  void validate() const;
};

double lr_at(std::int64_t iter, const Schedule& schedule);

struct AdamWConfig {
  double beta1 = 0.95;
  double beta2 = 0.99;
  double weight_decay = 0.01;
  double eps = 1e-8;
};

struct OptimState {
  AdamWConfig config;
  std::int64_t step = 0;
  std::vector<Tensor<float>> m;
  std::vector<Tensor<float>> v;

  // Sizes moments to the parameters if they are not already.
  void ensure(std::span<Parameter<float>* const> params);
};

// Decoupled weight decay:
//   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
// Every gradient is checked before anything is modified; a non-finite
// gradient rejects the step with the parameter's name.
void adamw_step(std::span<Parameter<float>* const> params, OptimState& state, double lr);

}  // namespace voxmae::train
