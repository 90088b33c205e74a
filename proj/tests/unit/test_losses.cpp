#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "voxmae/losses.hpp"
#include "voxmae/numcore/grad_check.hpp"
#include "voxmae/numcore/ops.hpp"
#include "voxmae/random.hpp"

using namespace voxmae;
using namespace voxmae::losses;
using numcore::Parameter;
using numcore::Tensor;

namespace {

std::vector<Point3> random_points(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Point3> v(n);
  for (auto& p : v) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  return v;
}

}  // namespace

TEST(Chamfer, Examples) {
  std::vector<Point3> o{{0, 0, 0}}, x{{1, 0, 0}}, oo{{0, 0, 0}, {0, 0, 0}};
  EXPECT_EQ(chamfer_voxel(o, o), 0.0);
  EXPECT_NEAR(chamfer_voxel(o, x), 2.0, 1e-12);
  EXPECT_NEAR(chamfer_voxel(oo, x), 2.0, 1e-12);
}

TEST(Chamfer, EmptyGroundTruthRejected) {
  std::vector<Point3> o{{0, 0, 0}}, none;
  EXPECT_THROW(chamfer_voxel(o, none), std::invalid_argument);
}

TEST(Chamfer, NonNegativeAndPermutationInvariant) {
  auto a = random_points(10, 1), b = random_points(17, 2);
  const double ref = chamfer_voxel(a, b);
  EXPECT_GT(ref, 0.0);
  std::reverse(a.begin(), a.end());
  std::rotate(b.begin(), b.begin() + 5, b.end());
  EXPECT_NEAR(chamfer_voxel(a, b), ref, 1e-12);
}

TEST(Chamfer, AnalyticGradientMatchesFiniteDifferences) {
  auto pred = random_points(10, 3), gt = random_points(23, 4);
  auto g = chamfer_voxel_grad(pred, gt);
  const double h = 1e-6;
  for (std::size_t i = 0; i < pred.size(); ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      auto up = pred, dn = pred;
      up[i][k] += h;
      dn[i][k] -= h;
      const double num = (chamfer_voxel(up, gt) - chamfer_voxel(dn, gt)) / (2 * h);
      EXPECT_NEAR(g.d_pred[i][k], num, 1e-6);
    }
}

TEST(Chamfer, Aggregation) {
  EXPECT_EQ(chamfer_total({}, Aggregation::sum), 0.0);
  EXPECT_EQ(chamfer_total({}, Aggregation::mean), 0.0);
  std::vector<double> v{2, 4};
  EXPECT_EQ(chamfer_total(v, Aggregation::sum), 6.0);
  EXPECT_EQ(chamfer_total(v, Aggregation::mean), 3.0);
}

TEST(Chamfer, SubsampleCapsAndIsDeterministic) {
  auto pts = random_points(150, 5);
  auto a = subsample(pts, 100, 9);
  EXPECT_EQ(a.size(), 100u);
  EXPECT_EQ(a, subsample(pts, 100, 9));
  EXPECT_NE(a, subsample(pts, 100, 10));
  for (const auto& p : a) EXPECT_NE(std::find(pts.begin(), pts.end(), p), pts.end());
  EXPECT_EQ(subsample(pts, 200, 9), pts);
}

TEST(Chamfer, TapeLossMatchesPerVoxelSum) {
  auto p = random_points(4, 6);
  Tensor<double> rows({2, 6});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k) rows[3 * i + k] = p[i][k];
  std::vector<ChamferTarget> targets{{0, random_points(5, 7)}, {1, random_points(3, 8)}};
  const double v0 = chamfer_voxel(std::vector<Point3>{p[0], p[1]}, targets[0].gt);
  const double v1 = chamfer_voxel(std::vector<Point3>{p[2], p[3]}, targets[1].gt);
  numcore::Tape<double> t;
  EXPECT_NEAR(t.value(chamfer_loss(t, t.constant(rows), targets, Aggregation::sum))[0], v0 + v1, 1e-12);
  EXPECT_NEAR(t.value(chamfer_loss(t, t.constant(rows), targets, Aggregation::mean))[0], (v0 + v1) / 2, 1e-12);
  EXPECT_EQ(t.value(chamfer_loss(t, t.constant(rows), {}, Aggregation::sum))[0], 0.0);
}

TEST(CountLoss, Examples) {
  EXPECT_EQ(count_loss(5, 5), 0.0);
  EXPECT_NEAR(count_loss(7, 10), 2.5, 1e-12);
  EXPECT_NEAR(count_loss(5.5, 5), 0.125, 1e-12);
}

TEST(OccupancyLoss, Examples) {
  EXPECT_NEAR(bce_with_logit(40, 1), 0.0, 1e-12);
  EXPECT_NEAR(bce_with_logit(0, 1), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_with_logit(0, 0), std::log(2.0), 1e-12);
  std::vector<double> z{2, -2}, y{1, 0};
  EXPECT_NEAR(occupancy_loss(z, y), 0.12693, 1e-5);
}

TEST(OccupancyLoss, StableAtLargeLogits) {
  for (double z : {-80.0, 80.0}) {
    EXPECT_TRUE(std::isfinite(bce_with_logit(z, 0)));
    EXPECT_TRUE(std::isfinite(bce_with_logit(z, 1)));
  }
  EXPECT_NEAR(bce_with_logit(80, 0), 80.0, 1e-9);
}

TEST(OccupancyLoss, NoLabelsRejected) {
  std::vector<double> none;
  EXPECT_THROW(occupancy_loss(none, none), std::invalid_argument);
  numcore::Tape<double> t;
  EXPECT_THROW(occupancy_loss(t, t.constant(Tensor<double>({1, 1})), {}), std::invalid_argument);
}

TEST(LossGradients, CountAndOccupancyMatchFiniteDifferences) {
  Rng rng(10);
  Tensor<double> cv({6, 1}), lv({6, 1});
  for (auto& v : cv.values()) v = rng.uniform(0, 6);
  for (auto& v : lv.values()) v = rng.uniform(-3, 3);
  Parameter<double> counts("counts", cv), logits("logits", lv);
  std::vector<CountTarget> ct{{0, 3}, {2, 1}, {3, 5}, {5, 2}};
  std::vector<OccupancyTarget> ot{{0, 1}, {1, 0}, {4, 1}, {5, 0}};
  std::vector<Parameter<double>*> ps{&counts, &logits};
  auto r = numcore::grad_check(
      [&](numcore::Tape<double>& t) {
        return numcore::add(t, count_loss(t, t.parameter(counts), ct), occupancy_loss(t, t.parameter(logits), ot));
      },
      ps);
  EXPECT_TRUE(r.passed) << r.summary();
}

TEST(TotalLoss, Examples) {
  LossWeights w;
  EXPECT_NEAR(total_loss(2, 1, 0.5, w, {}).total, 2.6, 1e-12);
  EXPECT_EQ(total_loss(2, 1, 0.5, w, {true, false, false}).total, 2.0);
  LossWeights occ_only{0, 0, 1};
  EXPECT_EQ(total_loss(2, 1, 0.5, occ_only, {}).total, 0.5);
  EXPECT_THROW(total_loss(2, 1, 0.5, w, {false, false, false}), std::invalid_argument);
}

TEST(TotalLoss, DisabledTermsPassNoGradient) {
  numcore::Tape<double> t;
  auto c = t.input(Tensor<double>({1}, {2.0}));
  auto n = t.input(Tensor<double>({1}, {1.0}));
  auto o = t.input(Tensor<double>({1}, {0.5}));
  auto w = combine_losses(t, c, n, o, LossWeights{}, LossToggles{true, false, true});
  EXPECT_NEAR(t.value(w.total)[0], 2.5, 1e-12);
  EXPECT_EQ(w.report.count, 0.0);
  t.backward(w.total);
  EXPECT_EQ(t.grad(c)[0], 1.0);
  EXPECT_EQ(t.grad(n)[0], 0.0);
  EXPECT_EQ(t.grad(o)[0], 1.0);
}

TEST(LossWeights, Validation) {
  EXPECT_NO_THROW(LossWeights{}.validate());
  EXPECT_THROW((LossWeights{-1, 0.1, 1}.validate()), std::invalid_argument);
  EXPECT_THROW((LossWeights{0, 0, 0}.validate()), std::invalid_argument);
}
