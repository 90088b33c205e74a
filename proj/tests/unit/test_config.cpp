#include <gtest/gtest.h>

#include <set>

#include "voxmae/config.hpp"

using namespace voxmae;
using namespace voxmae::config;

namespace {

bool mentions(const ConfigError& e, std::string_view what) {
  for (const auto& p : e.problems())
    if (p.find(what) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST(Config, DefaultsAreFullScaleValues) {
  auto c = RunConfig::defaults();
  EXPECT_TRUE(c.validate().empty());
  auto g = c.grid();
  EXPECT_EQ(g.voxel_size, (pointcloud::Vec3{0.5, 0.5, 8}));
  EXPECT_EQ(g.shape(), (voxelizer::GridShape{200, 200, 1}));
  auto m = c.model();
  EXPECT_EQ(m.d_model, 128u);
  EXPECT_EQ(m.n_enc_layers, 8u);
  EXPECT_EQ(m.n_heads, 8u);
  EXPECT_EQ(m.ffn_hidden, 256u);
  EXPECT_EQ(m.n_points, 10u);
  EXPECT_EQ(m.window, (model::WindowExtent{16, 16}));
  EXPECT_EQ(m.levels.train, (std::vector<std::size_t>{30, 60, 100, 200, 250}));
  EXPECT_EQ(c.mask().ratio, 0.7);
  EXPECT_EQ(c.mask().empty_fraction, 0.1);
  EXPECT_FALSE(c.mask().max_empty.has_value());
  auto l = c.loss();
  EXPECT_EQ(l.weights.alpha_c, 1.0);
  EXPECT_EQ(l.weights.alpha_np, 0.1);
  EXPECT_EQ(l.weights.alpha_occ, 1.0);
  auto o = c.optim();
  EXPECT_EQ(o.adam.beta1, 0.95);
  EXPECT_EQ(o.adam.beta2, 0.99);
  EXPECT_EQ(o.adam.weight_decay, 0.01);
  EXPECT_EQ(o.schedule.warmup_start_lr, 5e-5);
  EXPECT_EQ(o.schedule.peak_lr, 5e-4);
  EXPECT_EQ(o.schedule.warmup_iters, 1000);
  EXPECT_EQ(o.schedule.final_lr, 1e-7);
  EXPECT_EQ(o.batch_size, 4u);
}

TEST(Config, UnknownKeyRejected) {
  try {
    RunConfig::parse("[model]\nd_modle = 64\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_TRUE(mentions(e, "d_modle"));
    EXPECT_TRUE(mentions(e, "line 2"));
  }
  EXPECT_THROW(RunConfig::parse("[modle]\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("d_model = 3\n"), ConfigError);
  EXPECT_THROW(RunConfig::parse("[model]\nd_model\n"), ConfigError);
}

TEST(Config, AllProblemsReportedAtOnce) {
  try {
    RunConfig::parse("[model]\nd_model = abc\nn_heads = 0\n[mask]\nratio = 1.5\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_GE(e.problems().size(), 3u);
    EXPECT_TRUE(mentions(e, "d_model"));
    EXPECT_TRUE(mentions(e, "ratio"));
  }
}

TEST(Config, TextRoundTrip) {
  auto c = RunConfig::defaults();
  c.apply_preset("tiny");
  c.set("loss.alpha_np", "1");
  auto back = RunConfig::parse(c.to_text());
  EXPECT_EQ(back.to_text(), c.to_text());
  EXPECT_EQ(back.loss().weights.alpha_np, 1.0);
}

TEST(Config, UpdateOverridesOnlyGivenKeys) {
  auto c = RunConfig::defaults();
  c.update("[optim]\nepochs = 3\n");
  EXPECT_EQ(c.optim().epochs, 3u);
  EXPECT_EQ(c.model().d_model, 128u);
  EXPECT_THROW(c.update("[optim]\nepochs = 5\nbogus = 1\n"), ConfigError);
  EXPECT_EQ(c.optim().epochs, 3u);
}

TEST(Config, TinyPreset) {
  auto c = RunConfig::defaults();
  c.apply_preset("tiny");
  auto m = c.model();
  EXPECT_EQ(m.d_model, 32u);
  EXPECT_EQ(m.n_enc_layers, 2u);
  EXPECT_EQ(m.n_dec_layers, 1u);
  EXPECT_EQ(m.n_heads, 2u);
  EXPECT_EQ(c.optim().epochs, 20u);
  EXPECT_EQ(m.positional, model::PositionalEncoding::learned);
  EXPECT_THROW(c.apply_preset("huge"), ConfigError);
}

TEST(Config, ArchitectureDigestTracksShapeOnly) {
  auto a = RunConfig::defaults();
  auto b = a;
  b.set("optim.epochs", "7");
  EXPECT_EQ(a.architecture_digest(), b.architecture_digest());
  b.set("model.d_model", "64");
  EXPECT_NE(a.architecture_digest(), b.architecture_digest());
}

TEST(Config, DescribeKeysListsEveryKeyWithDefault) {
  const auto text = describe_keys();
  for (const auto& k : config_keys()) {
    const std::string name = std::string(k.section) + "." + std::string(k.key);
    EXPECT_NE(text.find(name), std::string::npos) << name;
    if (!k.default_value.empty()) EXPECT_NE(text.find(std::string(k.default_value)), std::string::npos) << name;
  }
}

TEST(Config, KeysAreUnique) {
  std::set<std::string> seen;
  for (const auto& k : config_keys())
    EXPECT_TRUE(seen.insert(std::string(k.section) + "." + std::string(k.key)).second) << k.key;
}

TEST(Config, CrossFieldValidation) {
  auto c = RunConfig::defaults();
  c.set("loss.chamfer", "false");
  c.set("loss.count", "false");
  c.set("loss.occupancy", "false");
  EXPECT_FALSE(c.validate().empty());
  auto d = RunConfig::defaults();
  d.set("model.n_heads", "3");
  EXPECT_FALSE(d.validate().empty());
}
