#include "voxmae/train/grad_suite.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "voxmae/losses.hpp"
#include "voxmae/masking.hpp"
#include "voxmae/model/model.hpp"
#include "voxmae/numcore/ops.hpp"
#include "voxmae/random.hpp"
#include "voxmae/train/trainer.hpp"

namespace voxmae::train {

using numcore::GradCheckOptions;
using numcore::Parameter;
using numcore::Tape;
using numcore::Tensor;
using numcore::Var;
namespace ops = numcore;

namespace {

// Values bounded away from zero so ReLU kinks sit far from the probe step.
Parameter<double> random_param(const std::string& name, numcore::Shape shape, Rng& rng, double lo = 0.1, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  return Parameter<double>(name, std::move(t));
}

struct OpCase {
  std::string name;
  std::vector<Parameter<double>> params;
  std::function<Var(Tape<double>&, std::vector<Var>&)> build;
};

std::vector<OpCase> op_cases(Rng& rng) {
  std::vector<OpCase> cases;
  auto add_case = [&](std::string name, std::vector<Parameter<double>> params,
                      std::function<Var(Tape<double>&, std::vector<Var>&)> build) {
    cases.push_back({std::move(name), std::move(params), std::move(build)});
  };

  add_case("op.linear", {random_param("op.linear.x", {5, 4}, rng), random_param("op.linear.weight", {4, 3}, rng),
                         random_param("op.linear.bias", {3}, rng)},
           [](Tape<double>& t, std::vector<Var>& v) { return ops::linear(t, v[0], v[1], v[2]); });
  add_case("op.matmul", {random_param("op.matmul.a", {3, 4}, rng), random_param("op.matmul.b", {4, 2}, rng)},
           [](Tape<double>& t, std::vector<Var>& v) { return ops::matmul(t, v[0], v[1]); });
  add_case("op.add_scale", {random_param("op.add.a", {2, 3}, rng), random_param("op.add.b", {2, 3}, rng)},
           [](Tape<double>& t, std::vector<Var>& v) { return ops::scale(t, ops::add(t, v[0], v[1]), 0.75); });
  add_case("op.relu", {random_param("op.relu.x", {4, 5}, rng)},
           [](Tape<double>& t, std::vector<Var>& v) { return ops::relu(t, v[0]); });
  add_case("op.gelu", {random_param("op.gelu.x", {4, 5}, rng, 0.0, 3.0)},
           [](Tape<double>& t, std::vector<Var>& v) { return ops::gelu(t, v[0]); });
  add_case("op.tanh", {random_param("op.tanh.x", {4, 5}, rng, 0.0, 2.5)},
           [](Tape<double>& t, std::vector<Var>& v) { return ops::tanh(t, v[0]); });
  add_case("op.layer_norm",
           {random_param("op.layer_norm.x", {4, 6}, rng, 0.0, 2.0), random_param("op.layer_norm.gain", {6}, rng),
            random_param("op.layer_norm.bias", {6}, rng)},
           [](Tape<double>& t, std::vector<Var>& v) { return ops::layer_norm(t, v[0], v[1], v[2], 1e-5); });
  add_case("op.softmax_masked", {random_param("op.softmax.scores", {3, 5}, rng, 0.0, 2.0)},
           [](Tape<double>& t, std::vector<Var>& v) {
             std::vector<std::uint8_t> masked = {0, 0, 1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 1};
             return ops::softmax_masked(t, v[0], masked);
           });
  {
    // Distinct values per column keep the arg-max away from ties.
    Tensor<double> x({7, 3});
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t c = 0; c < 3; ++c) x(i, c) = 0.3 * static_cast<double>((i * 5 + c * 3) % 7) + 0.1 * rng.uniform();
    add_case("op.segment_max", {Parameter<double>("op.segment_max.x", x)}, [](Tape<double>& t, std::vector<Var>& v) {
      return ops::segment_max(t, v[0], {0, 0, 1, 1, 1, 2, 2}, 3);
    });
  }
  add_case("op.segment_mean", {random_param("op.segment_mean.x", {6, 3}, rng)},
           [](Tape<double>& t, std::vector<Var>& v) { return ops::segment_mean(t, v[0], {1, 0, 1, 2, 2, 2}, 3); });
  add_case("op.rows", {random_param("op.rows.x", {4, 3}, rng), random_param("op.rows.token", {1, 3}, rng)},
           [](Tape<double>& t, std::vector<Var>& v) {
             Var g = ops::gather_rows(t, v[0], {3, 1, 1});
             Var r = ops::repeat_rows(t, v[1], 2);
             return ops::concat_rows(t, {g, r, v[0]});
           });
  add_case("op.sum", {random_param("op.sum.x", {3, 4}, rng)},
           [](Tape<double>& t, std::vector<Var>& v) { return ops::sum(t, v[0]); });
  add_case("op.window_attention", {random_param("op.attention.qkv", {7, 12}, rng, 0.0, 1.5)},
           [](Tape<double>& t, std::vector<Var>& v) {
             // Two padded windows; rows 5 and 6 are dropped tokens.
             std::vector<std::vector<std::int64_t>> groups = {{0, 1, 2, -1}, {3, 4, -1, -1}};
             return ops::window_attention(t, v[0], groups, 2);
           });

  {
    Parameter<double> pts = random_param("loss.chamfer.points", {3, 12}, rng, 0.0, 0.9);
    std::vector<losses::ChamferTarget> targets;
    for (std::size_t row : {0u, 2u}) {
      losses::ChamferTarget ct;
      ct.row = row;
      for (int k = 0; k < 6; ++k) ct.gt.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
      targets.push_back(std::move(ct));
    }
    add_case("loss.chamfer", {std::move(pts)}, [targets](Tape<double>& t, std::vector<Var>& v) {
      return losses::chamfer_loss(t, v[0], targets, losses::Aggregation::sum);
    });
  }
  {
    Tensor<double> c({4, 1}, {2.3, 7.0, 4.6, 0.2});
    std::vector<losses::CountTarget> targets = {{0, 2.0}, {1, 10.0}, {3, 5.0}};
    add_case("loss.count", {Parameter<double>("loss.count.pred", c)},
             [targets](Tape<double>& t, std::vector<Var>& v) { return losses::count_loss(t, v[0], targets); });
  }
  {
    std::vector<losses::OccupancyTarget> targets = {{0, 1.0}, {1, 0.0}, {2, 1.0}};
    add_case("loss.occupancy", {random_param("loss.occupancy.logits", {3, 1}, rng, 0.0, 3.0)},
             [targets](Tape<double>& t, std::vector<Var>& v) { return losses::occupancy_loss(t, v[0], targets); });
  }
  return cases;
}

pointcloud::SceneSpec small_scene(std::uint64_t seed) {
  pointcloud::SceneSpec s;
  s.ring_count = 2;
  s.max_range = 6.0;
  s.azimuth_steps = 48;
  s.object_count = 1;
  s.object_min_size = 1.5;
  s.object_max_size = 2.0;
  s.object_point_spacing = 0.3;
  s.seed = seed;
  return s;
}

void fold(GradSuiteReport& out, std::string name, numcore::GradCheckReport report) {
  if (!report.passed) out.passed = false;
  if (report.worst_rel_error > out.worst_rel_error || out.worst.empty()) {
    out.worst_rel_error = report.worst_rel_error;
    out.worst = name + ": " + report.worst_name;
  }
  out.sections.push_back({std::move(name), std::move(report)});
}

}  // namespace

std::string GradSuiteReport::summary() const {
  std::string s;
  for (const auto& sec : sections) {
    s += "[" + sec.name + "]\n";
    s += sec.report.summary();
  }
  char buf[256];
  std::snprintf(buf, sizeof buf, "grad-check %s: worst relative error %.3e in %s\n", passed ? "PASS" : "FAIL",
                worst_rel_error, worst.c_str());
  return s + buf;
}

GradSuiteReport run_grad_suite(const config::RunConfig& config, const GradSuiteOptions& options) {
  GradCheckOptions gco;
  gco.max_entries_per_parameter = options.max_entries_per_parameter;
  gco.seed = mix(options.seed, 0x6c);
  gco.corrupt_prefix = options.corrupt_prefix;

  GradSuiteReport out;
  Rng rng(mix(options.seed, 0x0b));
  for (auto& c : op_cases(rng)) {
    std::vector<Parameter<double>*> ps;
    for (auto& p : c.params) ps.push_back(&p);
    auto build = [&](Tape<double>& t) {
      std::vector<Var> vars;
      for (auto* p : ps) vars.push_back(t.parameter(*p));
      return c.build(t, vars);
    };
    fold(out, c.name, numcore::grad_check(build, ps, gco));
  }

  const auto grid = config.grid();
  const auto mc = config.model();
  const auto ms = config.mask();
  const auto ls = config.loss();
  const auto cloud = pointcloud::crop_to_range(pointcloud::generate_scene(small_scene(mix(options.seed, 0x5c))),
                                               grid.range_min, grid.range_max);
  const auto vc = voxelizer::voxelize(cloud, grid);
  auto plan = masking::plan_mask(vc, ms.ratio, ms.empty_fraction, mix(options.seed, 0x3a));
  plan = masking::plan_cap(plan, std::min<std::size_t>(ms.max_empty.value_or(24), 24));
  const auto targets = build_targets(vc, plan, ls.max_gt_points, mix(options.seed, 0x7e));

  struct Variant {
    const char* name;
    losses::LossToggles toggles;
  };
  const Variant variants[] = {
      {"model.chamfer", {true, false, false}},
      {"model.count", {false, true, false}},
      {"model.occupancy", {false, false, true}},
      {"model.total", {true, true, true}},
  };
  for (const auto& variant : variants) {
    auto params = model::init_params<double>(mc, grid, mix(options.seed, 0x1417));
    auto ps = params.parameters();
    auto build = [&](Tape<double>& t) {
      auto res = model::forward_scene(t, params, mc, vc, plan, model::ForwardOptions{false, 0});
      std::optional<Var> lc, ln, lo;
      const auto& tg = variant.toggles;
      if (tg.chamfer) lc = losses::chamfer_loss(t, res.heads.points, targets.chamfer, ls.aggregation);
      if (tg.count) ln = losses::count_loss(t, res.heads.count, targets.count);
      if (tg.occupancy) lo = losses::occupancy_loss(t, res.heads.occupancy, targets.occupancy);
      return losses::combine_losses(t, lc, ln, lo, ls.weights, tg).total;
    };
    fold(out, variant.name, numcore::grad_check(build, ps, gco));
  }
  return out;
}

}  // namespace voxmae::train
