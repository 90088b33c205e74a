#include "voxmae/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "voxmae/random.hpp"

namespace voxmae::train {

using losses::ChamferTarget;
using losses::CountTarget;
using losses::OccupancyTarget;
using losses::Point3;
using numcore::Tape;
using numcore::Var;
using voxelizer::GridConfig;
using voxelizer::VoxelIndex;
using voxelizer::VoxelizedCloud;

namespace {

// Stream tags for seeds derived from a scene's mask seed.
constexpr std::uint64_t kDropStream = 11;
constexpr std::uint64_t kSubsampleStream = 12;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

std::uint64_t init_seed(std::uint64_t run_seed) { return mix(run_seed, 0x1417); }

pointcloud::SceneSpec scene_spec_for(const config::DataSettings& data, std::size_t index) {
  auto spec = data.scene;
  spec.seed = mix(data.scene_seed, index);
  return spec;
}

std::vector<std::filesystem::path> list_scene_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".bin") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

Dataset build_dataset(const config::DataSettings& data, const GridConfig& grid) {
  Dataset ds;
  if (data.source == config::DataSource::synthetic) {
    for (std::size_t i = 0; i < data.scenes; ++i) {
      auto cloud = pointcloud::generate_scene(scene_spec_for(data, i));
      ds.scenes.push_back(voxelizer::voxelize(cloud, grid));
      char name[32];
      std::snprintf(name, sizeof name, "synthetic_%05zu", i);
      ds.names.emplace_back(name);
    }
  } else {
    for (const auto& path : list_scene_files(data.dir)) {
      ds.scenes.push_back(voxelizer::voxelize(pointcloud::load_bin(path, data.floats_per_point), grid));
      ds.names.push_back(path.filename().string());
    }
  }
  return ds;
}

pointcloud::Vec3 to_local(const pointcloud::Point& p, const VoxelIndex& voxel, const GridConfig& grid) {
  const auto c = voxelizer::voxel_center(voxel, grid);
  return {(p.x - c[0]) / (grid.voxel_size[0] / 2), (p.y - c[1]) / (grid.voxel_size[1] / 2),
          (p.z - c[2]) / (grid.voxel_size[2] / 2)};
}

pointcloud::Vec3 to_world(const pointcloud::Vec3& local, const VoxelIndex& voxel, const GridConfig& grid) {
  const auto c = voxelizer::voxel_center(voxel, grid);
  return {c[0] + local[0] * grid.voxel_size[0] / 2, c[1] + local[1] * grid.voxel_size[1] / 2,
          c[2] + local[2] * grid.voxel_size[2] / 2};
}

SceneTargets build_targets(const VoxelizedCloud& vc, const masking::MaskPlan& plan, std::size_t max_gt_points,
                           std::uint64_t seed) {
  SceneTargets t;
  const std::size_t base = plan.visible.size();
  for (std::size_t k = 0; k < plan.masked_nonempty.size(); ++k) {
    const auto& idx = plan.masked_nonempty[k];
    const auto* v = vc.find(idx);
    if (!v) throw std::invalid_argument("build_targets: masked voxel is not occupied");
    std::vector<Point3> local;
    local.reserve(v->points.size());
    for (const auto& p : v->points) local.push_back(to_local(p, idx, vc.grid));
    const std::size_t row = base + k;
    t.chamfer.push_back({row, losses::subsample(local, max_gt_points, mix(seed, static_cast<std::uint64_t>(vc.grid.linear(idx))))});
    t.count.push_back({row, static_cast<double>(v->points.size())});
    t.occupancy.push_back({row, 1.0});
  }
  const std::size_t empty_base = base + plan.masked_nonempty.size();
  for (std::size_t k = 0; k < plan.sampled_empty.size(); ++k) t.occupancy.push_back({empty_base + k, 0.0});
  return t;
}

std::string metrics_csv_header() { return "epoch,step,lr,loss_total,loss_chamfer,loss_count,loss_occ,occ_accuracy"; }

std::string metrics_csv_row(const EpochMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%zu,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", m.epoch, static_cast<long long>(m.step), m.lr,
                m.loss_total, m.loss_chamfer, m.loss_count, m.loss_occ, m.occ_accuracy);
  return buf;
}

Trainer::Trainer(const config::RunConfig& config) : Trainer(config, build_dataset(config.data(), config.grid())) {}

Trainer::Trainer(const config::RunConfig& config, Dataset dataset)
    : config_(config), dataset_(std::move(dataset)) {
  if (auto problems = config_.validate(); !problems.empty()) throw config::ConfigError(std::move(problems));
  grid_ = config_.grid();
  model_ = config_.model();
  mask_ = config_.mask();
  loss_ = config_.loss();
  optim_ = config_.optim();
  for (const auto& s : dataset_.scenes)
    if (!(s.grid.voxel_size == grid_.voxel_size && s.grid.range_min == grid_.range_min && s.grid.range_max == grid_.range_max))
      throw std::invalid_argument("dataset was voxelized with a different grid");
  steps_per_epoch_ = ceil_div(dataset_.scenes.size(), optim_.batch_size);
  // Runs shorter than the warmup stay on the warmup ramp.
  optim_.schedule.total_iters = std::max<std::int64_t>(total_steps(), optim_.schedule.warmup_iters);
  optim_.schedule.validate();
  params_ = model::init_params<float>(model_, grid_, init_seed(optim_.run_seed));
  state_.config = optim_.adam;
}

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(dataset_.scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(mix(mix(optim_.run_seed, 0x0D0E), epoch));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::uint64_t Trainer::mask_seed(std::size_t epoch, std::size_t scene) const {
  return mix(mix(optim_.run_seed, epoch), scene);
}

std::optional<EpochMetrics> Trainer::step(StepStats* stats) {
  if (done()) throw std::logic_error("training already finished");
  if (steps_per_epoch_ == 0) throw std::logic_error("empty dataset");
  const std::size_t epoch = static_cast<std::size_t>(iteration_) / steps_per_epoch_;
  const std::size_t in_epoch = static_cast<std::size_t>(iteration_) % steps_per_epoch_;
  if (cached_epoch_ != epoch) {
    cached_order_ = epoch_order(epoch);
    cached_epoch_ = epoch;
  }
  const std::size_t begin = in_epoch * optim_.batch_size;
  const std::size_t end = std::min(begin + optim_.batch_size, cached_order_.size());
  const std::size_t batch = end - begin;

  auto ps = params_.parameters();
  for (auto* p : ps) p->zero_grad();

  StepStats st;
  st.lr = lr_at(iteration_, optim_.schedule);
  const auto& tg = loss_.toggles;
  for (std::size_t b = begin; b < end; ++b) {
    const std::size_t scene = cached_order_[b];
    const auto& vc = dataset_.scenes[scene];
    const std::uint64_t seed = mask_seed(epoch, scene);
    auto plan = masking::plan_mask(vc, mask_.ratio, mask_.empty_fraction, seed);
    if (mask_.max_empty) plan = masking::plan_cap(plan, *mask_.max_empty);
    const auto targets = build_targets(vc, plan, loss_.max_gt_points, mix(seed, kSubsampleStream));

    Tape<float> tape;
    model::ForwardOptions fo{true, mix(seed, kDropStream)};
    auto out = model::forward_scene(tape, params_, model_, vc, plan, fo);
    std::optional<Var> lc, ln, lo;
    if (tg.chamfer) lc = losses::chamfer_loss(tape, out.heads.points, targets.chamfer, loss_.aggregation);
    if (tg.count) ln = losses::count_loss(tape, out.heads.count, targets.count);
    if (tg.occupancy) {
      lo = targets.occupancy.empty() ? tape.constant(Tensor<float>({1}))
                                     : losses::occupancy_loss(tape, out.heads.occupancy, targets.occupancy);
    }
    auto total = losses::combine_losses(tape, lc, ln, lo, loss_.weights, tg);
    const auto& r = total.report;
    if (!std::isfinite(r.total)) {
      char buf[256];
      std::snprintf(buf, sizeof buf, "non-finite loss at step %lld (scene %zu): total=%g chamfer=%g count=%g occupancy=%g",
                    static_cast<long long>(iteration_), scene, r.total, r.chamfer, r.count, r.occupancy);
      throw std::runtime_error(buf);
    }
    tape.backward(total.total, Tensor<float>({1}, {1.0f / static_cast<float>(batch)}));

    const double w = 1.0 / static_cast<double>(batch);
    st.loss.total += w * r.total;
    st.loss.chamfer += w * r.chamfer;
    st.loss.count += w * r.count;
    st.loss.occupancy += w * r.occupancy;
    const auto& occ = tape.value(out.heads.occupancy);
    for (const auto& t : targets.occupancy) {
      st.occ_correct += ((occ(t.row, 0) > 0.0f) == (t.label > 0.5)) ? 1 : 0;
      ++st.occ_labeled;
    }
    const auto& cnt = tape.value(out.heads.count);
    for (const auto& t : targets.count) {
      st.count_abs_error += std::abs(static_cast<double>(cnt(t.row, 0)) - t.count);
      ++st.count_targets;
    }
  }
  st.loss.enabled = tg;
  adamw_step(ps, state_, st.lr);
  ++iteration_;

  acc_.steps += 1;
  acc_.loss_total += st.loss.total;
  acc_.loss_chamfer += st.loss.chamfer;
  acc_.loss_count += st.loss.count;
  acc_.loss_occ += st.loss.occupancy;
  acc_.occ_correct += st.occ_correct;
  acc_.occ_labeled += st.occ_labeled;
  acc_.count_abs_error += st.count_abs_error;
  acc_.count_targets += st.count_targets;
  if (stats) *stats = st;

  if (in_epoch + 1 != steps_per_epoch_) return std::nullopt;
  EpochMetrics m;
  m.epoch = epoch + 1;
  m.step = iteration_;
  m.lr = st.lr;
  const double n = static_cast<double>(acc_.steps);
  m.loss_total = acc_.loss_total / n;
  m.loss_chamfer = acc_.loss_chamfer / n;
  m.loss_count = acc_.loss_count / n;
  m.loss_occ = acc_.loss_occ / n;
  m.occ_accuracy = acc_.occ_labeled ? static_cast<double>(acc_.occ_correct) / static_cast<double>(acc_.occ_labeled) : 0.0;
  m.count_mae = acc_.count_targets ? acc_.count_abs_error / static_cast<double>(acc_.count_targets) : 0.0;
  acc_ = {};
  return m;
}

std::vector<EpochMetrics> Trainer::run(const std::function<void(const EpochMetrics&)>& on_epoch) {
  std::vector<EpochMetrics> out;
  while (!done()) {
    if (auto m = step()) {
      if (on_epoch) on_epoch(*m);
      out.push_back(*m);
    }
  }
  return out;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.config_text = config_.to_text();
  ck.iteration = iteration_;
  ck.run_seed = optim_.run_seed;
  ck.epoch = acc_;
  store_state(ck, params_, state_);
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  const auto theirs = config::RunConfig::parse(ck.config_text);
  if (theirs.architecture_digest() != config_.architecture_digest())
    throw std::runtime_error("checkpoint architecture " + theirs.architecture_digest() + " does not match config " +
                             config_.architecture_digest());
  if (ck.run_seed != optim_.run_seed) throw std::runtime_error("checkpoint run seed differs from the config");
  if (ck.iteration < 0 || ck.iteration > total_steps())
    throw std::runtime_error("checkpoint iteration " + std::to_string(ck.iteration) + " is outside this run");
  restore_state(ck, params_, state_);
  state_.config = optim_.adam;
  iteration_ = ck.iteration;
  acc_ = ck.epoch;
  cached_epoch_ = static_cast<std::size_t>(-1);
}

}  // namespace voxmae::train
