// Acceptance suite: one PASS/FAIL line per criterion.
//   voxmae_acceptance --work DIR [--only 1,2,...]

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "voxmae/config.hpp"
#include "voxmae/losses.hpp"
#include "voxmae/masking.hpp"
#include "voxmae/model/windows.hpp"
#include "voxmae/ply.hpp"
#include "voxmae/random.hpp"
#include "voxmae/train/grad_suite.hpp"
#include "voxmae/train/reconstruct.hpp"
#include "voxmae/train/trainer.hpp"
#include "voxmae/voxelizer.hpp"

using namespace voxmae;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// ---- 1 -----------------------------------------------------------------------

Outcome voxelization_partition() {
  const auto t0 = Clock::now();
  const voxelizer::GridConfig g;
  std::size_t failures = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(mix(0xC1, s));
    pointcloud::PointCloud c;
    c.points.resize(10000);
    for (auto& p : c.points)
      p = {static_cast<float>(rng.uniform(-55, 55)), static_cast<float>(rng.uniform(-55, 55)),
           static_cast<float>(rng.uniform(-4, 6)), 0};
    std::size_t in_range = 0;
    for (const auto& p : c.points) {
      bool in = true;
      for (std::size_t k = 0; k < 3; ++k) in = in && p[k] >= g.range_min[k] && p[k] < g.range_max[k];
      in_range += in;
    }
    const auto vc = voxelizer::voxelize(c, g);
    std::size_t total = 0;
    bool reindex = true;
    for (const auto& v : vc.voxels) {
      total += v.points.size();
      for (const auto& p : v.points) reindex = reindex && voxelizer::voxel_index(p, g) == v.index;
    }
    if (total != in_range || !reindex) ++failures;
  }
  const double t = seconds_since(t0);
  return {failures == 0 && t < 5.0, fmt("100 scenes x 10000 points, %zu mismatching scenes, %.2f s (budget 5 s)", failures, t)};
}

// ---- 2 -----------------------------------------------------------------------

Outcome mask_cardinalities() {
  const voxelizer::GridConfig g;
  std::string detail;
  bool ok = true;
  for (std::size_t v : {1u, 10u, 137u, 3000u}) {
    const auto picks = masking::sample_without_replacement(40000, v, v);
    pointcloud::PointCloud c;
    for (auto id : picks) {
      const auto ctr = voxelizer::voxel_center(g.unlinear(static_cast<std::int64_t>(id)), g);
      c.points.push_back({static_cast<float>(ctr[0]), static_cast<float>(ctr[1]), 0.0f, 0});
    }
    const auto vc = voxelizer::voxelize(c, g);
    const auto plan = masking::plan_mask(vc, 0.7, 0.1, 17);
    const auto want_masked = static_cast<std::size_t>(std::floor(0.7L * v + 1e-9L));
    const std::size_t empty = 40000 - v;
    const auto want_empty = static_cast<std::size_t>(std::floor(0.1L * empty + 1e-9L));
    const bool row = vc.occupied_count() == v && plan.masked_nonempty.size() == want_masked &&
                     plan.visible.size() == v - want_masked && plan.sampled_empty.size() == want_empty;
    ok = ok && row;
    detail += fmt("v=%zu masked %zu/%zu decoys %zu/%zu; ", v, plan.masked_nonempty.size(), want_masked,
                  plan.sampled_empty.size(), want_empty);
  }
  return {ok, detail};
}

// ---- 3 -----------------------------------------------------------------------

Outcome window_partition() {
  using model::WindowId;
  std::size_t group_failures = 0, level_failures = 0;
  const std::vector<std::size_t> train_levels{30, 60, 100, 200, 250};
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng(mix(0xC3, s));
    const double density = rng.uniform(0.02, 0.6);
    std::vector<voxelizer::VoxelIndex> tokens;
    for (int x = 0; x < 64; ++x)
      for (int y = 0; y < 64; ++y)
        if (rng.uniform() < density) tokens.push_back({x, y, 0});
    for (bool shifted : {false, true}) {
      const auto part = model::partition(tokens, {16, 16}, shifted);
      // Brute force: token pairs share a group iff their shifted cell
      // coordinates fall in the same 16x16 tile.
      const int off = shifted ? 8 : 0;
      std::vector<int> group(tokens.size(), -1);
      int next = 0;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (group[i] >= 0) continue;
        group[i] = next;
        for (std::size_t j = i + 1; j < tokens.size(); ++j)
          if ((tokens[i].x + off) / 16 == (tokens[j].x + off) / 16 && (tokens[i].y + off) / 16 == (tokens[j].y + off) / 16)
            group[j] = next;
        ++next;
      }
      std::set<std::vector<std::size_t>> expected, actual;
      std::map<int, std::vector<std::size_t>> by_group;
      for (std::size_t i = 0; i < tokens.size(); ++i) by_group[group[i]].push_back(i);
      for (auto& [k, members] : by_group) expected.insert(members);
      for (const auto& [id, members] : part.groups) {
        auto m = members;
        std::sort(m.begin(), m.end());
        actual.insert(m);
      }
      if (expected != actual) ++group_failures;

      const auto batch = model::bucket_and_pad(part, model::PaddingLevels{}, true, s);
      for (const auto& w : batch.windows) {
        const std::size_t count = part.groups.at(w.id).size();
        std::size_t want = train_levels.back();
        for (auto l : train_levels)
          if (l >= count) {
            want = l;
            break;
          }
        if (w.level != want || w.slots.size() != want) ++level_failures;
      }
    }
  }
  return {group_failures == 0 && level_failures == 0,
          fmt("200 occupancies x 2 phases on 64x64: %zu grouping mismatches, %zu level mismatches", group_failures,
              level_failures)};
}

// ---- 4 -----------------------------------------------------------------------

Outcome loss_values() {
  using namespace losses;
  const double ch = chamfer_voxel(std::vector<Point3>{{0, 0, 0}}, std::vector<Point3>{{1, 0, 0}});
  const double c1 = count_loss(7, 10), c2 = count_loss(5.5, 5);
  const double occ = occupancy_loss(std::vector<double>{2, -2}, std::vector<double>{1, 0});
  const LossWeights w;
  const auto r = total_loss(ch, c1, occ, w, {});
  const double eq = 1.0 * ch + 0.1 * c1 + 1.0 * occ;
  const bool ok = std::abs(ch - 2) <= 1e-9 && std::abs(c1 - 2.5) <= 1e-9 && std::abs(c2 - 0.125) <= 1e-9 &&
                  std::abs(occ - 0.12693) <= 1e-4 && std::abs(r.total - eq) <= 1e-9;
  return {ok, fmt("chamfer %.12g, count(7,10) %.12g, count(5.5,5) %.12g, occupancy %.6f, total %.12g vs %.12g", ch, c1, c2,
                  occ, r.total, eq)};
}

// ---- 5 -----------------------------------------------------------------------

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  auto c = config::RunConfig::defaults();
  c.apply_preset("tiny");
  const auto report = train::run_grad_suite(c);
  const double t = seconds_since(t0);
  const std::vector<std::string> required{"op.linear", "op.matmul", "op.add_scale", "op.relu", "op.gelu", "op.tanh",
                                          "op.layer_norm", "op.softmax_masked", "op.segment_max", "op.segment_mean",
                                          "op.rows", "op.sum", "op.window_attention", "loss.chamfer", "loss.count",
                                          "loss.occupancy", "model.chamfer", "model.count", "model.occupancy",
                                          "model.total"};
  std::size_t missing = 0;
  for (const auto& name : required)
    missing += std::none_of(report.sections.begin(), report.sections.end(),
                            [&](const auto& s) { return s.name == name; });
  const bool ok = report.passed && report.worst_rel_error < 1e-4 && missing == 0 && t < 60.0;
  return {ok, fmt("%zu sections, worst relative error %.3g (%s), %zu missing, %.1f s (budget 60 s)", report.sections.size(),
                  report.worst_rel_error, report.worst.c_str(), missing, t)};
}

// ---- 6 -----------------------------------------------------------------------

Outcome schedule_endpoints() {
  auto c = config::RunConfig::defaults();
  auto s = c.optim().schedule;
  s.total_iters = static_cast<std::int64_t>(c.optim().epochs * ((c.data().scenes + 3) / 4));
  const double a = train::lr_at(0, s), b = train::lr_at(1000, s), e = train::lr_at(s.total_iters, s);
  double jump = 0;
  for (std::int64_t i = 1; i <= s.total_iters; ++i)
    jump = std::max(jump, std::abs(train::lr_at(i, s) - train::lr_at(i - 1, s)));
  const bool ok = std::abs(a - 5e-5) <= 1e-12 && std::abs(b - 5e-4) <= 1e-12 && std::abs(e - 1e-7) <= 1e-12 &&
                  jump < s.peak_lr / 100;
  return {ok, fmt("lr(0)=%.12g lr(1000)=%.12g lr(%lld)=%.12g, largest step %.3g (limit %.3g)", a, b,
                  static_cast<long long>(s.total_iters), e, jump, s.peak_lr / 100)};
}

// ---- 7, 8, 9 -------------------------------------------------------------------

config::RunConfig desk_config() {
  auto c = config::RunConfig::defaults();
  c.apply_preset("tiny");
  c.set("optim.run_seed", "0");
  return c;
}

struct DeskRun {
  bool ran = false;
  std::vector<train::EpochMetrics> metrics;
  std::string csv;
  double seconds = 0;
  fs::path checkpoint;
};

DeskRun& desk_run(const fs::path& work) {
  static DeskRun run;
  if (run.ran) return run;
  run.ran = true;
  const auto t0 = Clock::now();
  const auto c = desk_config();
  train::Trainer trainer(c);
  run.csv = train::metrics_csv_header() + "\n";
  run.metrics = trainer.run([&](const train::EpochMetrics& m) {
    run.csv += train::metrics_csv_row(m) + "\n";
    std::cout << "  epoch " << m.epoch << ": loss " << m.loss_total << ", occ acc " << m.occ_accuracy << ", count mae "
              << m.count_mae << "\n"
              << std::flush;
  });
  run.seconds = seconds_since(t0);
  fs::create_directories(work / "desk_a");
  {
    std::ofstream f(work / "desk_a" / "metrics.csv", std::ios::trunc);
    f << run.csv;
  }
  run.checkpoint = work / "desk_a" / "checkpoint.bin";
  train::save_checkpoint(trainer.checkpoint(), run.checkpoint);
  return run;
}

Outcome desk_training(const fs::path& work) {
  const auto& run = desk_run(work);
  const auto& m = run.metrics;
  if (m.size() != 20) return {false, fmt("expected 20 epochs, got %zu", m.size())};
  const double first = m.front().loss_total, last = m.back().loss_total;
  const double acc = m.back().occ_accuracy;
  double windows[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < 20; ++i) windows[i / 5] += m[i].count_mae / 5;
  const bool mono = windows[0] > windows[1] && windows[1] > windows[2] && windows[2] > windows[3];
  const bool loss_ok = last <= 0.5 * first, acc_ok = acc >= 0.90, time_ok = run.seconds < 900;
  return {loss_ok && acc_ok && mono && time_ok,
          fmt("loss %.4f -> %.4f (%.1f%% of epoch 1, need <= 50%%) %s; occupancy accuracy %.4f (need >= 0.90) %s; "
              "count MAE by 5-epoch window %.3f %.3f %.3f %.3f %s; %.0f s (budget 900 s)",
              first, last, 100 * last / first, loss_ok ? "ok" : "FAIL", acc, acc_ok ? "ok" : "FAIL", windows[0],
              windows[1], windows[2], windows[3], mono ? "ok" : "FAIL", run.seconds)};
}

Outcome determinism(const fs::path& work) {
  const auto& a = desk_run(work);
  // Second run through the command-line tool.
  const auto dir = work / "desk_b";
  fs::remove_all(dir);
  std::ostringstream out, err;
  const auto t0 = Clock::now();
  const int code = cli::run({"pretrain", "--preset", "tiny", "--seed", "0", "--quiet", "--out", dir.string()}, out, err);
  const double t = seconds_since(t0);
  const bool csv_same = code == 0 && slurp(dir / "metrics.csv") == a.csv;
  const bool ckpt_same = code == 0 && slurp(dir / "checkpoint.bin") == slurp(a.checkpoint);

  // Resume: 10 steps from a mid-epoch checkpoint vs uninterrupted.
  const auto c = desk_config();
  train::Trainer head(c);
  for (int i = 0; i < 20; ++i) head.step();
  const auto ck_path = work / "resume_at_20.bin";
  train::save_checkpoint(head.checkpoint(), ck_path);
  train::Trainer tail(c);
  tail.restore(train::load_checkpoint(ck_path));
  std::vector<train::StepStats> s_full, s_tail;
  train::Trainer full(c);
  for (int i = 0; i < 20; ++i) full.step();
  for (int i = 0; i < 10; ++i) {
    train::StepStats x, y;
    full.step(&x);
    tail.step(&y);
    s_full.push_back(x);
    s_tail.push_back(y);
  }
  bool steps_same = true;
  for (std::size_t i = 0; i < 10; ++i)
    steps_same = steps_same && s_full[i].loss.total == s_tail[i].loss.total && s_full[i].lr == s_tail[i].lr &&
                 s_full[i].occ_correct == s_tail[i].occ_correct;
  const bool resume_same =
      steps_same && train::serialize(full.checkpoint()) == train::serialize(tail.checkpoint());
  return {csv_same && ckpt_same && resume_same,
          fmt("second run (%.0f s, exit %d): metrics CSV %s, final checkpoint %s; resume after 20 steps, 10 more steps: %s",
              t, code, csv_same ? "identical" : "DIFFERS", ckpt_same ? "identical" : "DIFFERS",
              resume_same ? "bitwise identical" : "DIFFERS")};
}

Outcome export_contract(const fs::path& work) {
  const auto& run = desk_run(work);
  const auto c = desk_config();
  // Held out: a scene seed outside the training stream.
  auto data = c.data();
  data.scene_seed = 0xBEEF;
  const auto cloud = pointcloud::generate_scene(train::scene_spec_for(data, 0));
  const auto scene = work / "held_out.bin";
  pointcloud::save_bin(cloud, scene);
  const auto out_dir = work / "export";
  fs::remove_all(out_dir);
  std::ostringstream out, err;
  const int code = cli::run({"reconstruct", "--checkpoint", run.checkpoint.string(), "--scene", scene.string(),
                             "--mask-seed", "3", "--out", out_dir.string()},
                            out, err);
  if (code != 0) return {false, "reconstruct exited " + std::to_string(code) + ": " + err.str()};
  pointcloud::PointCloud masked, recon, truth;
  try {
    masked = ply::read_ply(out_dir / "masked.ply");
    recon = ply::read_ply(out_dir / "reconstructed.ply");
    truth = ply::read_ply(out_dir / "truth.ply");
  } catch (const std::exception& e) {
    return {false, std::string("invalid PLY: ") + e.what()};
  }
  std::multiset<std::tuple<float, float, float>> t;
  for (const auto& p : truth.points) t.insert({p.x, p.y, p.z});
  bool subset = true;
  for (const auto& p : masked.points) {
    auto it = t.find({p.x, p.y, p.z});
    if (it == t.end()) {
      subset = false;
      break;
    }
    t.erase(it);
  }
  const auto g = c.grid();
  const bool truth_ok = truth.points == pointcloud::crop_to_range(cloud, g.range_min, g.range_max).points;

  // Voxel membership of each exported point comes from the in-process bundle,
  // which must match the file.
  const auto bundle = train::reconstruct(train::load_checkpoint(run.checkpoint), nullptr, cloud, 3);
  const bool same_file = bundle.reconstructed.points == recon.points;
  std::size_t outside = 0;
  for (std::size_t i = 0; i < recon.points.size() && same_file; ++i) {
    const auto ctr = voxelizer::voxel_center(bundle.reconstructed_voxel[i], g);
    for (std::size_t k = 0; k < 3; ++k)
      if (std::abs(recon.points[i][k] - ctr[k]) > g.voxel_size[k] / 2 + 1e-5) {
        ++outside;
        break;
      }
  }
  const bool ok = subset && truth_ok && same_file && outside == 0 && masked.size() < truth.size() && !recon.empty();
  return {ok, fmt("masked %zu / truth %zu points, masked subset of truth %s, truth equals in-range input %s, "
                  "%zu reconstructed points, %zu outside their voxel",
                  masked.size(), truth.size(), subset ? "yes" : "NO", truth_ok ? "yes" : "NO", recon.size(), outside)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"voxelization partition oracle", voxelization_partition},
      {"mask cardinalities", mask_cardinalities},
      {"window partition and padding levels", window_partition},
      {"loss unit values", loss_values},
      {"gradient suite", gradient_suite},
      {"schedule endpoints", schedule_endpoints},
      {"desk-scale training", [&] { return desk_training(work); }},
      {"determinism", [&] { return determinism(work); }},
      {"export contract", [&] { return export_contract(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << "\n"
              << std::flush;
  }
  return failed == 0 ? 0 : 1;
}
