#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

#include "voxmae/config.hpp"
#include "voxmae/ply.hpp"
#include "voxmae/pointcloud.hpp"
#include "voxmae/train/checkpoint.hpp"
#include "voxmae/train/grad_suite.hpp"
#include "voxmae/train/reconstruct.hpp"
#include "voxmae/train/trainer.hpp"
#include "voxmae/voxelizer.hpp"

namespace voxmae::cli {
namespace {

namespace fs = std::filesystem;
using config::RunConfig;

struct ConfigFlags {
  std::string file;
  std::string preset;
  std::vector<std::string> sets;

  bool given() const { return !file.empty() || !preset.empty() || !sets.empty(); }
};

void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("--config", f.file, "run configuration file ([grid] [model] [mask] [loss] [optim] [data])");
  cmd->add_option("--preset", f.preset, "paper | tiny; applied before the config file")
      ->check(CLI::IsMember({"paper", "tiny"}));
  cmd->add_option("--set", f.sets, "override one key, e.g. --set optim.epochs=5 (repeatable)");
}

// defaults, then preset, then file, then --set; problems are collected.
std::optional<RunConfig> assemble(const ConfigFlags& f, std::vector<std::string>& problems) {
  try {
    RunConfig c = RunConfig::defaults();
    if (!f.preset.empty()) c.apply_preset(f.preset);
    if (!f.file.empty()) c.update(config::read_config_file(f.file));
    for (const auto& kv : f.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) {
        problems.push_back("--set '" + kv + "': expected section.key=value");
        continue;
      }
      try {
        c.set(kv.substr(0, eq), kv.substr(eq + 1));
      } catch (const config::ConfigError& e) {
        problems.insert(problems.end(), e.problems().begin(), e.problems().end());
      }
    }
    return c;
  } catch (const config::ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  } catch (const std::exception& e) {
    problems.emplace_back(e.what());
  }
  return std::nullopt;
}

int report_problems(const std::vector<std::string>& problems, std::ostream& err) {
  err << "invalid configuration (" << problems.size() << " problem" << (problems.size() == 1 ? "" : "s") << "):\n";
  for (const auto& p : problems) err << "  " << p << "\n";
  return kUsage;
}

template <typename V>
void set_if(RunConfig& c, const char* key, const std::optional<V>& v, std::vector<std::string>& problems) {
  if (!v) return;
  std::string text;
  if constexpr (std::is_same_v<V, bool>) {
    text = *v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<V>) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", *v);
    text = buf;
  } else {
    text = std::to_string(*v);
  }
  try {
    c.set(key, text);
  } catch (const config::ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
}

pointcloud::PointCloud load_scene(const fs::path& path, int floats_per_point) {
  if (path.extension() == ".ply") return ply::read_ply(path);
  return pointcloud::load_bin(path, floats_per_point);
}

std::string scene_file_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%05zu.bin", i);
  return buf;
}

// ---- gen-data ----------------------------------------------------------------

struct GenData {
  ConfigFlags cfg;
  std::string out;
  std::optional<std::size_t> scenes;
  std::optional<std::uint64_t> seed;
  std::optional<int> ring_count, azimuth_steps, object_count;
  std::optional<double> max_range, noise;
  bool no_intensity = false;
};

int gen_data(const GenData& g, std::ostream& out, std::ostream& err) {
  std::vector<std::string> problems;
  auto c = assemble(g.cfg, problems);
  if (c) {
    set_if(*c, "data.scenes", g.scenes, problems);
    set_if(*c, "data.scene_seed", g.seed, problems);
    set_if(*c, "data.ring_count", g.ring_count, problems);
    set_if(*c, "data.azimuth_steps", g.azimuth_steps, problems);
    set_if(*c, "data.object_count", g.object_count, problems);
    set_if(*c, "data.max_range", g.max_range, problems);
    set_if(*c, "data.ground_noise_sigma", g.noise, problems);
    if (g.no_intensity) c->set("data.with_intensity", "false");
    auto more = c->validate();
    problems.insert(problems.end(), more.begin(), more.end());
  }
  if (!problems.empty()) return report_problems(problems, err);
  const auto data = c->data();
  fs::create_directories(g.out);
  const fs::path manifest_path = fs::path(g.out) / "manifest.txt";
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write " + manifest_path.string());
  for (std::size_t i = 0; i < data.scenes; ++i) {
    const auto cloud = pointcloud::generate_scene(train::scene_spec_for(data, i));
    const auto name = scene_file_name(i);
    pointcloud::save_bin(cloud, fs::path(g.out) / name);
    manifest << name << " " << cloud.size() << "\n";
  }
  if (!manifest) throw std::runtime_error("error writing " + manifest_path.string());
  out << "wrote " << data.scenes << " scenes to " << g.out << "\n";
  return kOk;
}

// ---- voxelize-stats ------------------------------------------------------------

struct VoxelizeStats {
  ConfigFlags cfg;
  std::string in;
  std::string out;
  std::string histogram;
  std::optional<int> floats_per_point;
};

int voxelize_stats(const VoxelizeStats& v, std::ostream& out, std::ostream& err) {
  std::vector<std::string> problems;
  auto c = assemble(v.cfg, problems);
  if (c) {
    set_if(*c, "data.floats_per_point", v.floats_per_point, problems);
    auto more = c->validate();
    problems.insert(problems.end(), more.begin(), more.end());
  }
  if (!problems.empty()) return report_problems(problems, err);
  const auto grid = c->grid();
  const auto stride = c->data().floats_per_point;
  const auto cells = grid.shape().cells();

  std::ofstream file;
  if (!v.out.empty()) {
    file.open(v.out, std::ios::trunc);
    if (!file) throw std::runtime_error("cannot write " + v.out);
  }
  std::ostream& summary = v.out.empty() ? out : file;
  std::ofstream hist;
  if (!v.histogram.empty()) {
    hist.open(v.histogram, std::ios::trunc);
    if (!hist) throw std::runtime_error("cannot write " + v.histogram);
    hist << "scene,points_per_voxel,voxels\n";
  }
  summary << "scene,points,in_range,occupied,empty,empty_fraction,status\n";
  std::size_t failures = 0;
  for (const auto& path : train::list_scene_files(v.in)) {
    const auto name = path.filename().string();
    try {
      const auto vc = voxelizer::voxelize(pointcloud::load_bin(path, stride), grid);
      const auto occupied = static_cast<std::int64_t>(vc.occupied_count());
      char buf[256];
      std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%lld,%lld,%.9g,ok\n", name.c_str(), vc.report.input_points,
                    vc.report.in_range, static_cast<long long>(occupied), static_cast<long long>(cells - occupied),
                    static_cast<double>(cells - occupied) / static_cast<double>(cells));
      summary << buf;
      if (hist.is_open()) {
        std::map<std::size_t, std::size_t> counts;
        for (const auto& vox : vc.voxels) ++counts[vox.points.size()];
        for (const auto& [n, k] : counts) hist << name << "," << n << "," << k << "\n";
      }
    } catch (const std::exception& e) {
      ++failures;
      std::string msg = e.what();
      for (auto& ch : msg)
        if (ch == ',' || ch == '\n') ch = ';';
      summary << name << ",,,,,,error: " << msg << "\n";
      err << "warning: " << e.what() << "\n";
    }
  }
  if (failures) {
    err << failures << " scene file(s) could not be read\n";
    return kFailure;
  }
  return kOk;
}

// ---- pretrain --------------------------------------------------------------------

struct Pretrain {
  ConfigFlags cfg;
  std::string out;
  bool no_chamfer = false, no_count = false, no_occupancy = false;
  std::optional<double> alpha_c, alpha_np, alpha_occ;
  bool use_intensity = false;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::string resume;
  bool quiet = false;
};

int pretrain(const Pretrain& p, std::ostream& out, std::ostream& err) {
  std::vector<std::string> problems;
  auto c = assemble(p.cfg, problems);
  if (c) {
    if (p.no_chamfer) c->set("loss.chamfer", "false");
    if (p.no_count) c->set("loss.count", "false");
    if (p.no_occupancy) c->set("loss.occupancy", "false");
    if (p.use_intensity) c->set("model.use_intensity", "true");
    set_if(*c, "loss.alpha_c", p.alpha_c, problems);
    set_if(*c, "loss.alpha_np", p.alpha_np, problems);
    set_if(*c, "loss.alpha_occ", p.alpha_occ, problems);
    set_if(*c, "optim.epochs", p.epochs, problems);
    set_if(*c, "optim.run_seed", p.seed, problems);
    auto more = c->validate();
    problems.insert(problems.end(), more.begin(), more.end());
  }
  if (!p.resume.empty() && !fs::exists(p.resume)) problems.push_back("--resume: no such file " + p.resume);
  if (!problems.empty()) return report_problems(problems, err);

  const fs::path dir = p.out;
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "config.txt", std::ios::trunc);
    f << c->to_text();
  }
  train::Trainer trainer(*c);
  if (!p.resume.empty()) trainer.restore(train::load_checkpoint(p.resume));

  const fs::path metrics_path = dir / "metrics.csv";
  const bool append = !p.resume.empty() && fs::exists(metrics_path);
  std::ofstream metrics(metrics_path, append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());
  if (!append) metrics << train::metrics_csv_header() << "\n";
  metrics.flush();

  const auto every = c->optim().checkpoint_every;
  if (!p.quiet) out << "pretrain: " << trainer.dataset().scenes.size() << " scenes, " << trainer.steps_per_epoch()
                    << " steps/epoch, " << trainer.total_steps() << " steps\n";
  trainer.run([&](const train::EpochMetrics& m) {
    metrics << train::metrics_csv_row(m) << "\n";
    metrics.flush();
    if (!p.quiet) out << train::metrics_csv_row(m) << "\n" << std::flush;
    if (every && m.epoch % every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_epoch_%03zu.bin", m.epoch);
      train::save_checkpoint(trainer.checkpoint(), dir / name);
    }
  });
  train::save_checkpoint(trainer.checkpoint(), dir / "checkpoint.bin");
  if (!p.quiet) out << "wrote " << (dir / "checkpoint.bin").string() << "\n";
  return kOk;
}

// ---- grad-check ------------------------------------------------------------------

struct GradCheck {
  ConfigFlags cfg;
  std::uint64_t seed = 0;
  std::size_t entries = 6;
  std::string inject_fault;
  std::string report;
};

int grad_check(const GradCheck& g, std::ostream& out, std::ostream& err) {
  std::vector<std::string> problems;
  auto c = assemble(g.cfg, problems);
  if (c) {
    c->apply_preset("tiny");
    auto more = c->validate();
    problems.insert(problems.end(), more.begin(), more.end());
  }
  if (!problems.empty()) return report_problems(problems, err);
  train::GradSuiteOptions o;
  o.seed = g.seed;
  o.max_entries_per_parameter = g.entries;
  o.corrupt_prefix = g.inject_fault;
  const auto report = train::run_grad_suite(*c, o);
  const auto text = report.summary();
  out << text;
  if (!g.report.empty()) {
    std::ofstream f(g.report, std::ios::trunc);
    f << text;
  }
  if (!report.passed) {
    err << "gradient check failed: worst relative error " << report.worst_rel_error << " in " << report.worst << "\n";
    return kFailure;
  }
  return kOk;
}

// ---- reconstruct -----------------------------------------------------------------

struct Reconstruct {
  ConfigFlags cfg;
  std::string checkpoint;
  std::string scene;
  std::uint64_t mask_seed = 0;
  std::string out;
  std::optional<int> floats_per_point;
};

int reconstruct(const Reconstruct& r, std::ostream& out, std::ostream& err) {
  const auto ck = train::load_checkpoint(r.checkpoint);
  std::optional<RunConfig> expected;
  if (r.cfg.given()) {
    std::vector<std::string> problems;
    expected = assemble(r.cfg, problems);
    if (expected) {
      auto more = expected->validate();
      problems.insert(problems.end(), more.begin(), more.end());
    }
    if (!problems.empty()) return report_problems(problems, err);
  }
  const auto stride = r.floats_per_point.value_or(
      (expected ? *expected : RunConfig::parse(ck.config_text)).data().floats_per_point);
  const auto cloud = load_scene(r.scene, stride);
  const auto bundle = train::reconstruct(ck, expected ? &*expected : nullptr, cloud, r.mask_seed);
  train::write_bundle(bundle, r.out);
  out << "truth " << bundle.truth.size() << " points, masked " << bundle.masked.size() << " points, reconstructed "
      << bundle.reconstructed.size() << " points, " << bundle.voxels.size() << " voxels -> " << r.out << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked voxel autoencoder pre-training for lidar point clouds"};
  app.name("voxmae");
  app.require_subcommand(1);
  const std::string keys = config::describe_keys();
  app.footer(keys);

  GenData gd;
  auto* gen = app.add_subcommand("gen-data", "write deterministic synthetic lidar scenes");
  add_config_flags(gen, gd.cfg);
  gen->add_option("--out", gd.out, "output directory")->required();
  gen->add_option("--scenes", gd.scenes, "number of scenes (data.scenes)");
  gen->add_option("--seed", gd.seed, "base scene seed (data.scene_seed)");
  gen->add_option("--ring-count", gd.ring_count, "ground rings (data.ring_count)");
  gen->add_option("--max-range", gd.max_range, "scene radius in meters (data.max_range)");
  gen->add_option("--azimuth-steps", gd.azimuth_steps, "returns per ring (data.azimuth_steps)");
  gen->add_option("--object-count", gd.object_count, "boxes per scene (data.object_count)");
  gen->add_option("--noise", gd.noise, "ground height noise sigma (data.ground_noise_sigma)");
  gen->add_flag("--no-intensity", gd.no_intensity, "write x y z only");
  gen->footer(keys);

  VoxelizeStats vs;
  auto* stats = app.add_subcommand("voxelize-stats", "per-scene occupancy and points-per-voxel histogram");
  add_config_flags(stats, vs.cfg);
  stats->add_option("--in", vs.in, "directory of .bin scenes")->required();
  stats->add_option("--out", vs.out, "summary CSV (default: stdout)");
  stats->add_option("--histogram", vs.histogram, "histogram CSV: scene,points_per_voxel,voxels");
  stats->add_option("--floats-per-point", vs.floats_per_point, "record stride (data.floats_per_point)");
  stats->footer(keys);

  Pretrain pt;
  auto* pre = app.add_subcommand("pretrain", "masked voxel pre-training");
  add_config_flags(pre, pt.cfg);
  pre->add_option("--out", pt.out, "output directory for metrics.csv and checkpoints")->required();
  pre->add_flag("--no-chamfer", pt.no_chamfer, "disable the Chamfer term");
  pre->add_flag("--no-count", pt.no_count, "disable the point-count term");
  pre->add_flag("--no-occupancy", pt.no_occupancy, "disable the occupancy term");
  pre->add_option("--alpha-c", pt.alpha_c, "Chamfer weight (loss.alpha_c)");
  pre->add_option("--alpha-np", pt.alpha_np, "point-count weight (loss.alpha_np)");
  pre->add_option("--alpha-occ", pt.alpha_occ, "occupancy weight (loss.alpha_occ)");
  pre->add_flag("--use-intensity", pt.use_intensity, "feed intensity to the voxel encoder (model.use_intensity)");
  pre->add_option("--epochs", pt.epochs, "optim.epochs");
  pre->add_option("--seed", pt.seed, "optim.run_seed");
  pre->add_option("--resume", pt.resume, "continue from a checkpoint of the same run");
  pre->add_flag("--quiet", pt.quiet, "no progress output");
  pre->footer(keys);

  GradCheck gc;
  auto* grad = app.add_subcommand("grad-check", "finite-difference check of every layer, head and loss (tiny preset)");
  add_config_flags(grad, gc.cfg);
  grad->add_option("--seed", gc.seed, "seed for inputs, scene and probed entries");
  grad->add_option("--entries", gc.entries, "entries probed per parameter (0 = all)");
  grad->add_option("--report", gc.report, "also write the report to this file");
  grad->add_option("--inject-fault", gc.inject_fault, "negate gradients of parameters with this name prefix")->group("");
  grad->footer(keys);

  Reconstruct rc;
  auto* rec = app.add_subcommand("reconstruct", "export masked, reconstructed and true clouds of one scene");
  add_config_flags(rec, rc.cfg);
  rec->add_option("--checkpoint", rc.checkpoint, "checkpoint file")->required();
  rec->add_option("--scene", rc.scene, ".bin or .ply point cloud")->required();
  rec->add_option("--mask-seed", rc.mask_seed, "seed of the voxel mask");
  rec->add_option("--out", rc.out, "output directory")->required();
  rec->add_option("--floats-per-point", rc.floats_per_point, "record stride of a .bin scene");
  rec->footer(keys);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (gen->parsed()) return gen_data(gd, out, err);
    if (stats->parsed()) return voxelize_stats(vs, out, err);
    if (pre->parsed()) return pretrain(pt, out, err);
    if (grad->parsed()) return grad_check(gc, out, err);
    if (rec->parsed()) return reconstruct(rc, out, err);
  } catch (const config::ConfigError& e) {
    return report_problems(e.problems(), err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

}  // namespace voxmae::cli
