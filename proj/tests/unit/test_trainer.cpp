#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "voxmae/random.hpp"
#include "voxmae/train/reconstruct.hpp"
#include "voxmae/train/trainer.hpp"

using namespace voxmae;
using namespace voxmae::train;
using config::RunConfig;

namespace {

RunConfig small_run(std::size_t scenes = 6, std::size_t epochs = 2) {
  auto c = RunConfig::defaults();
  c.apply_preset("tiny");
  c.set("data.scenes", std::to_string(scenes));
  c.set("data.azimuth_steps", "90");
  c.set("optim.batch_size", "2");
  c.set("optim.epochs", std::to_string(epochs));
  c.set("optim.warmup_iters", "4");
  return c;
}

bool same_params(const model::ModelParams<float>& a, const model::ModelParams<float>& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (!(pa[i]->value == pb[i]->value)) return false;
  return true;
}

}  // namespace

TEST(LocalFrame, CenterAndInverse) {
  voxelizer::GridConfig g;
  auto w = to_world({0, 0, 0}, {100, 100, 0}, g);
  EXPECT_EQ(w, (pointcloud::Vec3{0.25, 0.25, 1.0}));
  auto corner = to_world({1, -1, 1}, {100, 100, 0}, g);
  EXPECT_EQ(corner, (pointcloud::Vec3{0.5, 0.0, 5.0}));
  pointcloud::Point p{0.3f, 0.1f, -2.0f, 0};
  auto l = to_local(p, {100, 100, 0}, g);
  auto back = to_world(l, {100, 100, 0}, g);
  EXPECT_NEAR(back[0], p.x, 1e-9);
  EXPECT_NEAR(back[1], p.y, 1e-9);
  EXPECT_NEAR(back[2], p.z, 1e-9);
}

TEST(Targets, RowOrderFollowsDecoderTokens) {
  voxelizer::GridConfig g;
  pointcloud::SceneSpec spec;
  auto vc = voxelizer::voxelize(pointcloud::generate_scene(spec), g);
  auto plan = masking::plan_cap(masking::plan_mask(vc, 0.7, 0.1, 3), 50);
  auto t = build_targets(vc, plan, 100, 4);
  const std::size_t v = plan.visible.size(), m = plan.masked_nonempty.size();
  ASSERT_EQ(t.chamfer.size(), m);
  ASSERT_EQ(t.count.size(), m);
  ASSERT_EQ(t.occupancy.size(), m + plan.sampled_empty.size());
  for (std::size_t k = 0; k < m; ++k) {
    EXPECT_EQ(t.chamfer[k].row, v + k);
    const auto* vox = vc.find(plan.masked_nonempty[k]);
    EXPECT_EQ(t.count[k].count, static_cast<double>(vox->points.size()));
    EXPECT_EQ(t.chamfer[k].gt.size(), std::min<std::size_t>(100, vox->points.size()));
    for (const auto& q : t.chamfer[k].gt)
      for (double c : q) EXPECT_LE(std::abs(c), 1.0 + 1e-9);
    EXPECT_EQ(t.occupancy[k].label, 1.0);
  }
  for (std::size_t k = m; k < t.occupancy.size(); ++k) {
    EXPECT_EQ(t.occupancy[k].row, v + k);
    EXPECT_EQ(t.occupancy[k].label, 0.0);
  }
}

TEST(Trainer, ZeroEpochsEqualsInitialization) {
  auto c = small_run(2, 0);
  Trainer t(c);
  EXPECT_TRUE(t.run().empty());
  auto init = model::init_params<float>(c.model(), c.grid(), init_seed(0));
  EXPECT_TRUE(same_params(t.params(), init));
}

TEST(Trainer, GradientsReachEveryParameter) {
  auto c = small_run(2, 1);
  c.set("optim.batch_size", "1");
  Trainer t(c);
  t.step();
  for (const auto* p : std::as_const(t.params()).parameters()) {
    if (p->value.empty()) continue;
    bool nonzero = false;
    for (float g : p->grad.values()) nonzero = nonzero || g != 0.0f;
    EXPECT_TRUE(nonzero) << p->name;
  }
}

TEST(Trainer, GradientsReachLearnedPositions) {
  auto c = small_run(2, 1);
  c.set("model.positional", "learned");
  Trainer t(c);
  t.step();
  bool nonzero = false;
  for (float g : t.params().pos_table.grad.values()) nonzero = nonzero || g != 0.0f;
  EXPECT_TRUE(nonzero);
}

TEST(Trainer, IdenticalSeedsIdenticalMetrics) {
  auto c = small_run(4, 2);
  auto rows = [&] {
    Trainer t(c);
    std::string s;
    for (const auto& m : t.run()) s += metrics_csv_row(m) + "\n";
    return s;
  };
  const auto a = rows();
  EXPECT_EQ(a, rows());
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 2);
}

TEST(Trainer, ResumeMatchesUninterruptedBitwise) {
  auto c = small_run(6, 5);  // 3 steps per epoch, 15 steps
  Trainer full(c);
  std::vector<EpochMetrics> full_m;
  for (int i = 0; i < 14; ++i)
    if (auto m = full.step()) full_m.push_back(*m);

  Trainer first(c);
  for (int i = 0; i < 4; ++i) first.step();  // stops mid-epoch
  const auto bytes = serialize(first.checkpoint());
  Trainer resumed(c);
  resumed.restore(deserialize(bytes));
  EXPECT_EQ(resumed.iteration(), 4);
  std::vector<EpochMetrics> res_m;
  for (int i = 0; i < 10; ++i)
    if (auto m = resumed.step()) res_m.push_back(*m);

  EXPECT_TRUE(same_params(full.params(), resumed.params()));
  EXPECT_EQ(serialize(full.checkpoint()), serialize(resumed.checkpoint()));
  ASSERT_EQ(full_m.size(), 4u);
  ASSERT_EQ(res_m.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(metrics_csv_row(full_m[i + 1]), metrics_csv_row(res_m[i]));
}

TEST(Trainer, RestoreRejectsOtherArchitecture) {
  auto c = small_run(2, 1);
  Trainer a(c);
  auto ck = a.checkpoint();
  auto d = c;
  d.set("model.ffn_hidden", "48");
  Trainer b(d);
  EXPECT_THROW(b.restore(ck), std::runtime_error);
}

TEST(Trainer, MasksAndOrderChangePerEpoch) {
  Trainer t(small_run(6, 2));
  EXPECT_NE(t.mask_seed(0, 1), t.mask_seed(1, 1));
  EXPECT_NE(t.mask_seed(0, 1), t.mask_seed(0, 2));
  auto o = t.epoch_order(0);
  std::sort(o.begin(), o.end());
  EXPECT_EQ(o, (std::vector<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(Trainer, MetricsHeader) {
  EXPECT_EQ(metrics_csv_header(), "epoch,step,lr,loss_total,loss_chamfer,loss_count,loss_occ,occ_accuracy");
}

TEST(Reconstruct, ExportContract) {
  auto c = small_run(2, 1);
  Trainer t(c);
  t.run();
  pointcloud::SceneSpec spec;
  spec.seed = 12345;
  auto cloud = pointcloud::generate_scene(spec);
  auto b = reconstruct(c, t.params(), cloud, 7);
  auto g = c.grid();
  EXPECT_EQ(b.truth.points, pointcloud::crop_to_range(cloud, g.range_min, g.range_max).points);
  EXPECT_LT(b.masked.size(), b.truth.size());
  std::multiset<std::tuple<float, float, float>> truth;
  for (const auto& p : b.truth.points) truth.insert({p.x, p.y, p.z});
  for (const auto& p : b.masked.points) {
    auto it = truth.find({p.x, p.y, p.z});
    ASSERT_NE(it, truth.end());
    truth.erase(it);
  }
  const auto occupied = voxelizer::voxelize(cloud, g).occupied_count();
  EXPECT_EQ(b.reconstructed.size(), occupied * c.model().n_points);
  ASSERT_EQ(b.reconstructed_voxel.size(), b.reconstructed.size());
  for (std::size_t i = 0; i < b.reconstructed.size(); ++i) {
    const auto& p = b.reconstructed.points[i];
    const auto ctr = voxelizer::voxel_center(b.reconstructed_voxel[i], g);
    for (std::size_t k = 0; k < 3; ++k) ASSERT_LE(std::abs(p[k] - ctr[k]), g.voxel_size[k] / 2 + 1e-5);
  }
  auto again = reconstruct(c, t.params(), cloud, 7);
  EXPECT_EQ(again.reconstructed.points, b.reconstructed.points);
}

TEST(Reconstruct, RatioZeroKeepsEveryPoint) {
  auto c = small_run(2, 0);
  c.set("mask.ratio", "0");
  Trainer t(c);
  pointcloud::SceneSpec spec;
  auto cloud = pointcloud::generate_scene(spec);
  auto b = reconstruct(c, t.params(), cloud, 1);
  auto sorted = [](std::vector<pointcloud::Point> v) {
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
      return std::tie(a.x, a.y, a.z, a.intensity) < std::tie(b.x, b.y, b.z, b.intensity);
    });
    return v;
  };
  EXPECT_EQ(sorted(b.masked.points), sorted(b.truth.points));
}

TEST(Reconstruct, CheckpointMismatchNamesBothDigests) {
  auto c = small_run(2, 0);
  Trainer t(c);
  auto ck = t.checkpoint();
  auto other = c;
  other.set("model.d_model", "64");
  other.set("model.ffn_hidden", "128");
  try {
    reconstruct(ck, &other, pointcloud::generate_scene({}), 0);
    FAIL();
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(c.architecture_digest()), std::string::npos) << msg;
    EXPECT_NE(msg.find(other.architecture_digest()), std::string::npos) << msg;
  }
}
