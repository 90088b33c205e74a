#include "voxmae/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "voxmae/masking.hpp"
#include "voxmae/numcore/ops.hpp"

namespace voxmae::losses {

using numcore::Tensor;

namespace {

template <typename P, typename Q>
double sq_dist(const P& a, const Q& b) {
  const double dx = static_cast<double>(a[0]) - static_cast<double>(b[0]);
  const double dy = static_cast<double>(a[1]) - static_cast<double>(b[1]);
  const double dz = static_cast<double>(a[2]) - static_cast<double>(b[2]);
  return dx * dx + dy * dy + dz * dz;
}

// pred is n consecutive xyz triples.
template <typename T>
double chamfer_kernel(const T* pred, std::size_t n, std::span<const Point3> gt, T* d_pred, T scale) {
  if (gt.empty()) throw std::invalid_argument("chamfer: ground-truth set is empty");
  if (n == 0) throw std::invalid_argument("chamfer: prediction set is empty");
  const std::size_t m = gt.size();
  double forward = 0, backward = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* p = pred + 3 * i;
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < m; ++j) {
      const double d = sq_dist(p, gt[j]);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    forward += best;
    if (d_pred) {
      const double w = 2.0 / static_cast<double>(n);
      for (int k = 0; k < 3; ++k) d_pred[3 * i + k] += scale * static_cast<T>(w * (static_cast<double>(p[k]) - gt[arg][k]));
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = sq_dist(pred + 3 * i, gt[j]);
      if (d < best) {
        best = d;
        arg = i;
      }
    }
    backward += best;
    if (d_pred) {
      const double w = 2.0 / static_cast<double>(m);
      for (int k = 0; k < 3; ++k)
        d_pred[3 * arg + k] += scale * static_cast<T>(w * (static_cast<double>(pred[3 * arg + k]) - gt[j][k]));
    }
  }
  return forward / static_cast<double>(n) + backward / static_cast<double>(m);
}

double smooth_l1_grad(double n_hat, double n_true) {
  const double diff = n_hat - n_true;
  if (std::abs(diff) < 1.0) return diff;
  return diff > 0 ? 1.0 : -1.0;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

double chamfer_voxel(std::span<const Point3> pred, std::span<const Point3> gt) {
  return chamfer_kernel<double>(pred.empty() ? nullptr : pred[0].data(), pred.size(), gt, nullptr, 1.0);
}

ChamferGrad chamfer_voxel_grad(std::span<const Point3> pred, std::span<const Point3> gt) {
  ChamferGrad out;
  out.d_pred.assign(pred.size(), Point3{0, 0, 0});
  out.value = chamfer_kernel<double>(pred.empty() ? nullptr : pred[0].data(), pred.size(), gt,
                                     out.d_pred.empty() ? nullptr : out.d_pred[0].data(), 1.0);
  return out;
}

double chamfer_total(std::span<const double> per_voxel, Aggregation aggregation) {
  double s = 0;
  for (double v : per_voxel) s += v;
  if (aggregation == Aggregation::mean && !per_voxel.empty()) s /= static_cast<double>(per_voxel.size());
  return s;
}

std::vector<Point3> subsample(std::span<const Point3> points, std::size_t cap, std::uint64_t seed) {
  if (points.size() <= cap) return {points.begin(), points.end()};
  const auto keep = masking::sample_without_replacement(points.size(), cap, seed);
  std::vector<Point3> out;
  out.reserve(cap);
  for (auto i : keep) out.push_back(points[i]);
  return out;
}

template <typename T>
Var chamfer_loss(Tape<T>& tape, Var points, std::span<const ChamferTarget> targets, Aggregation aggregation) {
  const Tensor<T>& pv = tape.value(points);
  const std::size_t width = pv.cols();
  if (width % 3 != 0) throw std::invalid_argument("chamfer_loss: point head width must be a multiple of 3");
  const std::size_t n = width / 3;
  double total = 0;
  for (const auto& t : targets) {
    if (t.row >= pv.rows()) throw std::invalid_argument("chamfer_loss: target row out of range");
    total += chamfer_kernel<T>(pv.row(t.row), n, t.gt, nullptr, T(1));
  }
  const double norm = (aggregation == Aggregation::mean && !targets.empty()) ? 1.0 / static_cast<double>(targets.size()) : 1.0;
  total *= norm;
  std::vector<ChamferTarget> owned(targets.begin(), targets.end());
  const Var self{tape.size()};
  return tape.record(Tensor<T>({1}, {static_cast<T>(total)}), {points},
                     [points, self, n, norm, owned = std::move(owned)](Tape<T>& tp) {
                       const T g = tp.grad(self)[0] * static_cast<T>(norm);
                       const Tensor<T>& pv2 = tp.value(points);
                       Tensor<T>& gp = tp.grad(points);
                       for (const auto& t : owned) chamfer_kernel<T>(pv2.row(t.row), n, t.gt, gp.row(t.row), g);
                     });
}

double count_loss(double n_hat, double n_true) {
  const double diff = std::abs(n_true - n_hat);
  return diff < 1.0 ? 0.5 * diff * diff : diff - 0.5;
}

template <typename T>
Var count_loss(Tape<T>& tape, Var counts, std::span<const CountTarget> targets) {
  const Tensor<T>& cv = tape.value(counts);
  double total = 0;
  for (const auto& t : targets) {
    if (t.row >= cv.rows()) throw std::invalid_argument("count_loss: target row out of range");
    total += count_loss(static_cast<double>(cv(t.row, 0)), t.count);
  }
  if (!targets.empty()) total /= static_cast<double>(targets.size());
  std::vector<CountTarget> owned(targets.begin(), targets.end());
  const Var self{tape.size()};
  return tape.record(Tensor<T>({1}, {static_cast<T>(total)}), {counts},
                     [counts, self, owned = std::move(owned)](Tape<T>& tp) {
                       if (owned.empty()) return;
                       const double g = static_cast<double>(tp.grad(self)[0]) / static_cast<double>(owned.size());
                       const Tensor<T>& cv2 = tp.value(counts);
                       Tensor<T>& gc = tp.grad(counts);
                       for (const auto& t : owned)
                         gc(t.row, 0) += static_cast<T>(g * smooth_l1_grad(static_cast<double>(cv2(t.row, 0)), t.count));
                     });
}

double bce_with_logit(double z, double y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

double occupancy_loss(std::span<const double> logits, std::span<const double> labels) {
  if (logits.empty()) throw std::invalid_argument("occupancy_loss: no labeled tokens");
  if (logits.size() != labels.size()) throw std::invalid_argument("occupancy_loss: logits/labels size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += bce_with_logit(logits[i], labels[i]);
  return s / static_cast<double>(logits.size());
}

template <typename T>
Var occupancy_loss(Tape<T>& tape, Var logits, std::span<const OccupancyTarget> targets) {
  if (targets.empty()) throw std::invalid_argument("occupancy_loss: no labeled tokens");
  const Tensor<T>& lv = tape.value(logits);
  double total = 0;
  for (const auto& t : targets) {
    if (t.row >= lv.rows()) throw std::invalid_argument("occupancy_loss: target row out of range");
    total += bce_with_logit(static_cast<double>(lv(t.row, 0)), t.label);
  }
  total /= static_cast<double>(targets.size());
  std::vector<OccupancyTarget> owned(targets.begin(), targets.end());
  const Var self{tape.size()};
  return tape.record(Tensor<T>({1}, {static_cast<T>(total)}), {logits},
                     [logits, self, owned = std::move(owned)](Tape<T>& tp) {
                       const double g = static_cast<double>(tp.grad(self)[0]) / static_cast<double>(owned.size());
                       const Tensor<T>& lv2 = tp.value(logits);
                       Tensor<T>& gl = tp.grad(logits);
                       for (const auto& t : owned)
                         gl(t.row, 0) += static_cast<T>(g * (sigmoid(static_cast<double>(lv2(t.row, 0))) - t.label));
                     });
}

void LossWeights::validate() const {
  if (!(alpha_c >= 0 && alpha_np >= 0 && alpha_occ >= 0))
    throw std::invalid_argument("loss weights must be non-negative");
  if (!(alpha_c > 0 || alpha_np > 0 || alpha_occ > 0))
    throw std::invalid_argument("at least one loss weight must be positive");
}

void LossToggles::validate() const {
  if (!chamfer && !count && !occupancy)
    throw std::invalid_argument("all loss terms are disabled; enable at least one of chamfer, count, occupancy");
}

LossReport total_loss(double chamfer, double count, double occupancy, const LossWeights& weights,
                      const LossToggles& enabled) {
  enabled.validate();
  LossReport r;
  r.enabled = enabled;
  r.chamfer = enabled.chamfer ? chamfer : 0.0;
  r.count = enabled.count ? count : 0.0;
  r.occupancy = enabled.occupancy ? occupancy : 0.0;
  r.total = 0;
  if (enabled.chamfer) r.total += weights.alpha_c * chamfer;
  if (enabled.count) r.total += weights.alpha_np * count;
  if (enabled.occupancy) r.total += weights.alpha_occ * occupancy;
  return r;
}

template <typename T>
WeightedLoss<T> combine_losses(Tape<T>& tape, std::optional<Var> chamfer, std::optional<Var> count,
                               std::optional<Var> occupancy, const LossWeights& weights, const LossToggles& enabled) {
  enabled.validate();
  auto scalar = [&](const std::optional<Var>& v, bool on, const char* what) -> double {
    if (!on) return 0.0;
    if (!v) throw std::invalid_argument(std::string("combine_losses: enabled term '") + what + "' not provided");
    return static_cast<double>(tape.value(*v)[0]);
  };
  WeightedLoss<T> out;
  out.report = total_loss(scalar(chamfer, enabled.chamfer, "chamfer"), scalar(count, enabled.count, "count"),
                          scalar(occupancy, enabled.occupancy, "occupancy"), weights, enabled);
  std::vector<Var> parts;
  if (enabled.chamfer) parts.push_back(numcore::scale(tape, *chamfer, static_cast<T>(weights.alpha_c)));
  if (enabled.count) parts.push_back(numcore::scale(tape, *count, static_cast<T>(weights.alpha_np)));
  if (enabled.occupancy) parts.push_back(numcore::scale(tape, *occupancy, static_cast<T>(weights.alpha_occ)));
  Var total = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) total = numcore::add(tape, total, parts[i]);
  out.total = total;
  return out;
}

#define VOXMAE_INSTANTIATE_LOSSES(T)                                                                        \
  template Var chamfer_loss<T>(Tape<T>&, Var, std::span<const ChamferTarget>, Aggregation);                \
  template Var count_loss<T>(Tape<T>&, Var, std::span<const CountTarget>);                                 \
  template Var occupancy_loss<T>(Tape<T>&, Var, std::span<const OccupancyTarget>);                         \
  template WeightedLoss<T> combine_losses<T>(Tape<T>&, std::optional<Var>, std::optional<Var>,             \
                                             std::optional<Var>, const LossWeights&, const LossToggles&);

VOXMAE_INSTANTIATE_LOSSES(float)
VOXMAE_INSTANTIATE_LOSSES(double)

}  // namespace voxmae::losses
