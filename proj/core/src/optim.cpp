#include "voxmae/train/optim.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace voxmae::train {

void Schedule::validate() const {
  if (warmup_iters < 0) throw std::invalid_argument("schedule: warmup_iters must be >= 0");
  if (total_iters < warmup_iters) throw std::invalid_argument("schedule: total_iters must be >= warmup_iters");
  if (!(warmup_start_lr >= 0 && peak_lr > 0 && final_lr >= 0)) throw std::invalid_argument("schedule: invalid rates");
}

double lr_at(std::int64_t iter, const Schedule& s) {
  if (iter < 0) iter = 0;
  if (iter > s.total_iters) iter = s.total_iters;
  if (iter <= s.warmup_iters) {
    if (s.warmup_iters == 0) return s.peak_lr;
    return s.warmup_start_lr + (s.peak_lr - s.warmup_start_lr) * static_cast<double>(iter) / static_cast<double>(s.warmup_iters);
  }
  const double progress = static_cast<double>(iter - s.warmup_iters) / static_cast<double>(s.total_iters - s.warmup_iters);
  return s.final_lr + (s.peak_lr - s.final_lr) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

void OptimState::ensure(std::span<Parameter<float>* const> params) {
  if (m.size() == params.size()) {
    bool ok = true;
    for (std::size_t i = 0; i < params.size() && ok; ++i)
      ok = m[i].shape() == params[i]->value.shape() && v[i].shape() == params[i]->value.shape();
    if (ok) return;
    if (step != 0) throw std::invalid_argument("optimizer state does not match the model parameters");
  } else if (!m.empty()) {
    throw std::invalid_argument("optimizer state holds " + std::to_string(m.size()) + " moments for " +
                                std::to_string(params.size()) + " parameters");
  }
  m.clear();
  v.clear();
  for (auto* p : params) {
    m.push_back(Tensor<float>::zeros_like(p->value));
    v.push_back(Tensor<float>::zeros_like(p->value));
  }
}

void adamw_step(std::span<Parameter<float>* const> params, OptimState& state, double lr) {
  for (auto* p : params) {
    if (p->grad.shape() != p->value.shape())
      throw std::invalid_argument("adamw_step: gradient shape mismatch for " + p->name);
    for (std::size_t i = 0; i < p->grad.size(); ++i) {
      if (!std::isfinite(p->grad[i]))
        throw std::runtime_error("adamw_step: non-finite gradient in " + p->name + " at entry " + std::to_string(i));
    }
  }
  state.ensure(params);
  ++state.step;
  const auto& c = state.config;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      const double theta = p.value[i];
      p.value[i] = static_cast<float>(theta - lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * theta));
    }
  }
}

}  // namespace voxmae::train
