#include "voxmae/train/reconstruct.hpp"

#include <cmath>
#include <cstdio>
#include <memory>
#include <stdexcept>

#include "voxmae/masking.hpp"
#include "voxmae/ply.hpp"
#include "voxmae/train/trainer.hpp"

namespace voxmae::train {

using model::TokenKind;

namespace {

const char* kind_name(TokenKind k) {
  switch (k) {
    case TokenKind::visible:
      return "visible";
    case TokenKind::masked_nonempty:
      return "masked";
    case TokenKind::masked_empty:
      return "empty";
  }
  return "?";
}

}  // namespace

ExportBundle reconstruct(const config::RunConfig& config, model::ModelParams<float>& params,
                         const pointcloud::PointCloud& cloud, std::uint64_t mask_seed) {
  const auto grid = config.grid();
  const auto mc = config.model();
  const auto ms = config.mask();

  ExportBundle out;
  out.truth = pointcloud::crop_to_range(cloud, grid.range_min, grid.range_max);
  const auto vc = voxelizer::voxelize(out.truth, grid);
  auto plan = masking::plan_mask(vc, ms.ratio, ms.empty_fraction, mask_seed);
  if (ms.max_empty) plan = masking::plan_cap(plan, *ms.max_empty);

  out.masked.has_intensity = out.truth.has_intensity;
  for (const auto& idx : plan.visible) {
    const auto* v = vc.find(idx);
    out.masked.points.insert(out.masked.points.end(), v->points.begin(), v->points.end());
  }

  numcore::Tape<float> tape;
  const auto res = model::forward_scene(tape, params, mc, vc, plan, model::ForwardOptions{false, 0});
  const auto& pts = tape.value(res.heads.points);
  const auto& cnt = tape.value(res.heads.count);
  const auto& occ = tape.value(res.heads.occupancy);
  const auto& dec = res.decoded;
  for (std::size_t row = 0; row < dec.size(); ++row) {
    const auto& idx = dec.indices[row];
    VoxelPrediction vp;
    vp.index = idx;
    vp.kind = dec.kinds[row];
    const auto* v = vc.find(idx);
    vp.true_count = v ? v->points.size() : 0;
    vp.predicted_count = cnt(row, 0);
    vp.occupancy_probability = 1.0 / (1.0 + std::exp(-static_cast<double>(occ(row, 0))));
    out.voxels.push_back(vp);
    if (vp.kind == TokenKind::masked_empty) continue;
    for (std::size_t k = 0; k < mc.n_points; ++k) {
      const float* p = pts.row(row) + 3 * k;
      const auto w = to_world({p[0], p[1], p[2]}, idx, grid);
      pointcloud::Point q;
      q.x = static_cast<float>(w[0]);
      q.y = static_cast<float>(w[1]);
      q.z = static_cast<float>(w[2]);
      out.reconstructed.points.push_back(q);
      out.reconstructed_voxel.push_back(idx);
    }
  }
  return out;
}

ExportBundle reconstruct(const Checkpoint& ck, const config::RunConfig* expected, const pointcloud::PointCloud& cloud,
                         std::uint64_t mask_seed) {
  auto cfg = config::RunConfig::parse(ck.config_text);
  if (expected && expected->architecture_digest() != cfg.architecture_digest())
    throw std::runtime_error("checkpoint config digest " + cfg.architecture_digest() +
                             " does not match the requested config digest " + expected->architecture_digest());
  if (expected) {
    // Masking settings come from the caller; the architecture is identical.
    cfg = *expected;
  }
  auto params = model::init_params<float>(cfg.model(), cfg.grid(), 0);
  OptimState unused;
  restore_state(ck, params, unused);
  return reconstruct(cfg, params, cloud, mask_seed);
}

void write_bundle(const ExportBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ply::write_ply(bundle.masked, dir / "masked.ply");
  ply::write_ply(bundle.reconstructed, dir / "reconstructed.ply");
  ply::write_ply(bundle.truth, dir / "truth.ply");
  const auto csv = dir / "voxels.csv";
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> f(std::fopen(csv.string().c_str(), "wb"), &std::fclose);
  if (!f) throw std::runtime_error("cannot write " + csv.string());
  std::fprintf(f.get(), "ix,iy,iz,kind,true_count,predicted_count,occupancy_probability\n");
  for (const auto& v : bundle.voxels)
    std::fprintf(f.get(), "%d,%d,%d,%s,%zu,%.9g,%.9g\n", v.index.x, v.index.y, v.index.z, kind_name(v.kind), v.true_count,
                 v.predicted_count, v.occupancy_probability);
}

}  // namespace voxmae::train
