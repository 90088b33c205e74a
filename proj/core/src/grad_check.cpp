#include "voxmae/numcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "voxmae/random.hpp"

namespace voxmae::numcore {
namespace {

double contract(const Tensor<double>& out, const Tensor<double>& weights) {
  double acc = 0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * weights[i];
  return acc;
}

}  // namespace

std::string GradCheckReport::summary() const {
  std::string s;
  char buf[256];
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-40s %s max_rel=%.3e at %zu (analytic %.6e, numeric %.6e, %zu checked)%s\n",
                  e.name.c_str(), e.passed ? "PASS" : "FAIL", e.max_rel_error, e.worst_index, e.analytic, e.numeric,
                  e.checked, e.finite ? "" : " non-finite analytic gradient");
    s += buf;
  }
  std::snprintf(buf, sizeof buf, "overall %s, worst %.3e in %s\n", passed ? "PASS" : "FAIL", worst_rel_error,
                worst_name.c_str());
  s += buf;
  return s;
}

GradCheckReport grad_check(const GradCheckBuild& build, std::span<Parameter<double>* const> params,
                           const GradCheckOptions& options) {
  Rng rng(options.seed);
  for (auto* p : params) p->zero_grad();

  TapeOptions topt;
  topt.corrupt_prefix = options.corrupt_prefix;
  Tensor<double> weights;
  {
    Tape<double> tape(topt);
    Var out = build(tape);
    weights = Tensor<double>(tape.value(out).shape());
    for (auto& w : weights.values()) w = rng.uniform(-1.0, 1.0);
    if (weights.size() == 1) weights[0] = 1.0;
    tape.backward(out, weights);
  }

  auto evaluate = [&]() {
    Tape<double> tape;
    Var out = build(tape);
    return contract(tape.value(out), weights);
  };

  GradCheckReport report;
  for (auto* p : params) {
    GradCheckEntry e;
    e.name = p->name;
    const std::size_t n = p->value.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (options.max_entries_per_parameter && n > options.max_entries_per_parameter) {
      for (std::size_t i = 0; i < options.max_entries_per_parameter; ++i)
        std::swap(idx[i], idx[i + rng.below(n - i)]);
      idx.resize(options.max_entries_per_parameter);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      const double analytic = p->grad[i];
      if (!std::isfinite(analytic)) {
        e.finite = false;
        e.passed = false;
        e.worst_index = i;
        e.max_rel_error = INFINITY;
        break;
      }
      const double saved = p->value[i];
      p->value[i] = saved + options.step;
      const double up = evaluate();
      p->value[i] = saved - options.step;
      const double down = evaluate();
      p->value[i] = saved;
      const double numeric = (up - down) / (2 * options.step);
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++e.checked;
      if (rel >= e.max_rel_error) {
        e.max_rel_error = rel;
        e.worst_index = i;
        e.analytic = analytic;
        e.numeric = numeric;
      }
    }
    if (e.max_rel_error >= options.tolerance) e.passed = false;
    if (!e.passed) report.passed = false;
    if (e.max_rel_error > report.worst_rel_error || report.worst_name.empty()) {
      report.worst_rel_error = e.max_rel_error;
      report.worst_name = e.name;
    }
    report.entries.push_back(std::move(e));
  }
  return report;
}

}  // namespace voxmae::numcore
