#include <gtest/gtest.h>

#include <cmath>

#include "voxmae/numcore/grad_check.hpp"
#include "voxmae/numcore/ops.hpp"
#include "voxmae/random.hpp"

using namespace voxmae;
using namespace voxmae::numcore;

namespace {

Parameter<double> random_param(const std::string& name, Shape shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(-1, 1);
  return Parameter<double>(name, std::move(t));
}

}  // namespace

TEST(Tensor, SizeMatchesShape) {
  Tensor<float> t({3, 4, 2});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_EQ(t.rows(), 3u);
  EXPECT_EQ(t.cols(), 8u);
  EXPECT_THROW(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), std::invalid_argument);
}

TEST(Tensor, ZeroGradIsExactlyZero) {
  auto p = random_param("p", {2, 3}, 1);
  p.grad.fill(3.5);
  p.zero_grad();
  EXPECT_EQ(p.grad.shape(), p.value.shape());
  for (double g : p.grad.values()) EXPECT_EQ(g, 0.0);
}

TEST(Matmul, IdentityAndSelection) {
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  Tensor<double> m({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(matmul(eye, m), m);
  Tensor<double> a({1, 2}, {1, 0});
  Tensor<double> b({2, 1}, {0, 5});
  EXPECT_EQ(matmul(a, b), Tensor<double>({1, 1}, {0}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tensor<double> a({2, 3}), b({2, 2});
  try {
    matmul(a, b);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("[2,2]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  auto a = random_param("a", {3, 4}, 2);
  auto b = random_param("b", {4, 2}, 3);
  std::vector<Parameter<double>*> ps{&a, &b};
  GradCheckOptions o;
  o.tolerance = 1e-6;
  auto r = grad_check([&](Tape<double>& t) { return matmul(t, t.parameter(a), t.parameter(b)); }, ps, o);
  EXPECT_TRUE(r.passed) << r.summary();
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  Tape<double> t;
  auto x = t.constant(Tensor<double>({1, 3}, {5, 5, 5}));
  auto g = t.constant(Tensor<double>({3}, 1.0));
  auto b = t.constant(Tensor<double>({3}, 0.0));
  const auto& y = t.value(layer_norm(t, x, g, b, 1e-5));
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, NormalizedRowIsFixed) {
  Tape<double> t;
  auto x = t.constant(Tensor<double>({1, 2}, {1, -1}));
  auto g = t.constant(Tensor<double>({2}, 1.0));
  auto b = t.constant(Tensor<double>({2}, 0.0));
  const auto& y = t.value(layer_norm(t, x, g, b, 1e-12));
  EXPECT_NEAR(y[0], 1.0, 1e-9);
  EXPECT_NEAR(y[1], -1.0, 1e-9);
}

TEST(LayerNorm, GradientMatchesFiniteDifferences) {
  auto x = random_param("x", {4, 6}, 4);
  auto g = random_param("gain", {6}, 5);
  auto b = random_param("bias", {6}, 6);
  std::vector<Parameter<double>*> ps{&x, &g, &b};
  auto r = grad_check(
      [&](Tape<double>& t) { return layer_norm(t, t.parameter(x), t.parameter(g), t.parameter(b), 1e-5); }, ps);
  EXPECT_TRUE(r.passed) << r.summary();
}

TEST(Softmax, Examples) {
  auto even = softmax_masked(Tensor<double>({1, 2}, {0, 0}), {});
  EXPECT_DOUBLE_EQ(even[0], 0.5);
  EXPECT_DOUBLE_EQ(even[1], 0.5);

  std::vector<std::uint8_t> mask{0, 1};
  auto single = softmax_masked(Tensor<double>({1, 2}, {-3.0, 7.0}), mask);
  EXPECT_EQ(single[0], 1.0);
  EXPECT_EQ(single[1], 0.0);

  auto three = softmax_masked(Tensor<double>({1, 3}, {1, 2, 3}), {});
  EXPECT_NEAR(three[0], 0.09003, 1e-5);
  EXPECT_NEAR(three[1], 0.24473, 1e-5);
  EXPECT_NEAR(three[2], 0.66524, 1e-5);
}

TEST(Softmax, FullyMaskedRowRejected) {
  std::vector<std::uint8_t> mask{1, 1};
  EXPECT_THROW(softmax_masked(Tensor<double>({1, 2}, {0, 0}), mask), std::invalid_argument);
}

TEST(GradCheck, LinearPasses) {
  auto x = random_param("x", {5, 4}, 7);
  auto w = random_param("w", {4, 3}, 8);
  auto b = random_param("b", {3}, 9);
  std::vector<Parameter<double>*> ps{&x, &w, &b};
  auto r = grad_check([&](Tape<double>& t) { return linear(t, t.parameter(x), t.parameter(w), t.parameter(b)); }, ps);
  EXPECT_TRUE(r.passed) << r.summary();
  EXPECT_LT(r.worst_rel_error, 1e-4);
}

TEST(GradCheck, SignFlipFailsAndNamesParameter) {
  auto x = random_param("x", {5, 4}, 7);
  auto w = random_param("layer.weight", {4, 3}, 8);
  auto b = random_param("layer.bias", {3}, 9);
  std::vector<Parameter<double>*> ps{&x, &w, &b};
  GradCheckOptions o;
  o.corrupt_prefix = "layer.weight";
  auto r = grad_check([&](Tape<double>& t) { return linear(t, t.parameter(x), t.parameter(w), t.parameter(b)); }, ps, o);
  EXPECT_FALSE(r.passed);
  EXPECT_EQ(r.worst_name, "layer.weight");
  for (const auto& e : r.entries) EXPECT_EQ(e.passed, e.name != "layer.weight") << e.name;
}

TEST(GradCheck, NonFiniteAnalyticGradientReported) {
  auto x = random_param("x", {2, 2}, 10);
  std::vector<Parameter<double>*> ps{&x};
  auto r = grad_check(
      [&](Tape<double>& t) {
        Var v = t.parameter(x);
        const Var self{t.size()};
        return t.record(t.value(v), {v}, [v, self](Tape<double>& tp) {
          tp.grad(v) += tp.grad(self);
          tp.grad(v)[1] = NAN;
        });
      },
      ps);
  EXPECT_FALSE(r.passed);
  EXPECT_FALSE(r.entries[0].finite);
  EXPECT_EQ(r.entries[0].worst_index, 1u);
}

TEST(GradCheck, ElementwiseAndPoolingOps) {
  Rng rng(11);
  Tensor<double> xv({6, 3});
  for (auto& v : xv.values()) v = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.1, 1.0);
  Parameter<double> x("x", xv);
  std::vector<Parameter<double>*> ps{&x};
  auto check = [&](const char* what, auto&& f) {
    auto r = grad_check([&](Tape<double>& t) { return f(t, t.parameter(x)); }, ps);
    EXPECT_TRUE(r.passed) << what << "\n" << r.summary();
  };
  check("relu", [](Tape<double>& t, Var v) { return relu(t, v); });
  check("gelu", [](Tape<double>& t, Var v) { return gelu(t, v); });
  check("tanh", [](Tape<double>& t, Var v) { return numcore::tanh(t, v); });
  check("segment_mean", [](Tape<double>& t, Var v) { return segment_mean(t, v, {0, 1, 0, 1, 2, 2}, 3); });
  check("gather", [](Tape<double>& t, Var v) { return gather_rows(t, v, {5, 0, 0}); });
  check("concat", [](Tape<double>& t, Var v) { return concat_rows(t, {v, scale(t, v, 2.0)}); });
  check("sum", [](Tape<double>& t, Var v) { return sum(t, v); });
}

TEST(SegmentMax, TiesGoToLowestRow) {
  Tape<double> t;
  auto x = t.input(Tensor<double>({3, 1}, {2.0, 2.0, 1.0}));
  auto y = segment_max(t, x, {0, 0, 0}, 1);
  EXPECT_EQ(t.value(y)[0], 2.0);
  t.backward(y);
  EXPECT_EQ(t.grad(x)[0], 1.0);
  EXPECT_EQ(t.grad(x)[1], 0.0);
  EXPECT_EQ(t.grad(x)[2], 0.0);
}

TEST(WindowAttention, TokenOutsideGroupsIsZero) {
  Rng rng(12);
  Tensor<double> qkv({3, 6});
  for (auto& v : qkv.values()) v = rng.uniform(-1, 1);
  Tape<double> t;
  auto q = t.input(qkv);
  auto y = window_attention(t, q, {{0, 1, -1}}, 1);
  const auto& out = t.value(y);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(out(2, c), 0.0);
}

TEST(WindowAttention, SingletonAttendsToItself) {
  Tensor<double> qkv({1, 6}, {0.3, -0.2, 0.5, 0.1, 4.0, -7.0});
  Tape<double> t;
  auto y = window_attention(t, t.input(qkv), {{0, -1, -1}}, 2);
  EXPECT_DOUBLE_EQ(t.value(y)(0, 0), 4.0);
  EXPECT_DOUBLE_EQ(t.value(y)(0, 1), -7.0);
}
