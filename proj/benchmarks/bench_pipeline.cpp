#include <benchmark/benchmark.h>

#include "voxmae/config.hpp"
#include "voxmae/losses.hpp"
#include "voxmae/masking.hpp"
#include "voxmae/model/model.hpp"
#include "voxmae/pointcloud.hpp"
#include "voxmae/random.hpp"
#include "voxmae/voxelizer.hpp"

using namespace voxmae;

namespace {

const pointcloud::PointCloud& scene() {
  static const auto cloud = pointcloud::generate_scene(pointcloud::SceneSpec{});
  return cloud;
}

void BM_Voxelize(benchmark::State& state) {
  const voxelizer::GridConfig g;
  for (auto _ : state) benchmark::DoNotOptimize(voxelizer::voxelize(scene(), g));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(scene().size()));
}
BENCHMARK(BM_Voxelize);

void BM_PlanMask(benchmark::State& state) {
  const auto vc = voxelizer::voxelize(scene(), voxelizer::GridConfig{});
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(masking::plan_mask(vc, 0.7, 0.1, ++seed));
}
BENCHMARK(BM_PlanMask);

void BM_PartitionAndPad(benchmark::State& state) {
  const auto vc = voxelizer::voxelize(scene(), voxelizer::GridConfig{});
  std::vector<voxelizer::VoxelIndex> idx;
  for (const auto& v : vc.voxels) idx.push_back(v.index);
  const bool shifted = state.range(0) != 0;
  for (auto _ : state) {
    auto p = model::partition(idx, {16, 16}, shifted);
    benchmark::DoNotOptimize(model::bucket_and_pad(p, model::PaddingLevels{}, true, 1));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(idx.size()));
}
BENCHMARK(BM_PartitionAndPad)->Arg(0)->Arg(1);

void BM_EncoderForward(benchmark::State& state) {
  auto c = config::RunConfig::defaults();
  c.apply_preset(state.range(0) ? "paper" : "tiny");
  const auto mc = c.model();
  const auto grid = c.grid();
  auto params = model::init_params<float>(mc, grid, 0);
  const auto vc = voxelizer::voxelize(scene(), grid);
  const auto plan = masking::plan_cap(masking::plan_mask(vc, 0.7, 0.1, 1), 256);
  for (auto _ : state) {
    numcore::Tape<float> tape;
    benchmark::DoNotOptimize(model::forward_scene(tape, params, mc, vc, plan, {true, 1}));
  }
  state.counters["visible"] = static_cast<double>(plan.visible.size());
}
BENCHMARK(BM_EncoderForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ChamferVoxel(benchmark::State& state) {
  Rng rng(1);
  std::vector<losses::Point3> pred(10), gt(static_cast<std::size_t>(state.range(0)));
  for (auto& p : pred) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  for (auto& p : gt) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  for (auto _ : state) benchmark::DoNotOptimize(losses::chamfer_voxel_grad(pred, gt));
}
BENCHMARK(BM_ChamferVoxel)->Arg(10)->Arg(100);

}  // namespace
BENCHMARK_MAIN();
