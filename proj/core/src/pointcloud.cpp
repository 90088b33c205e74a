#include "voxmae/pointcloud.hpp"

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "voxmae/random.hpp"

namespace voxmae::pointcloud {
namespace {

static_assert(sizeof(float) == 4);

float read_le_float(const unsigned char* p) {
  std::uint32_t u = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
                    (std::uint32_t(p[3]) << 24);
  return std::bit_cast<float>(u);
}

void write_le_float(std::string& out, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

}  // namespace

PointCloud load_bin(const std::filesystem::path& path, int floats_per_point) {
  if (floats_per_point < 3 || floats_per_point > 5) {
    throw std::invalid_argument("load_bin: floats_per_point must be 3, 4 or 5, got " + std::to_string(floats_per_point));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_bin: cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t stride = static_cast<std::size_t>(floats_per_point) * 4;
  if (bytes.size() % stride != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % stride;
    throw std::runtime_error("load_bin: " + path.string() + " truncated record at byte offset " +
                             std::to_string(offset) + " (file size " + std::to_string(bytes.size()) +
                             ", stride " + std::to_string(stride) + ")");
  }
  PointCloud cloud;
  cloud.has_intensity = floats_per_point >= 4;
  cloud.source = path.string();
  const std::size_t n = bytes.size() / stride;
  cloud.points.reserve(n);
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = base + i * stride;
    Point p;
    p.x = read_le_float(rec);
    p.y = read_le_float(rec + 4);
    p.z = read_le_float(rec + 8);
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw std::runtime_error("load_bin: " + path.string() + " non-finite coordinate in record " + std::to_string(i));
    }
    if (cloud.has_intensity) p.intensity = read_le_float(rec + 12);
    cloud.points.push_back(p);
  }
  return cloud;
}

void save_bin(const PointCloud& cloud, const std::filesystem::path& path) {
  std::string out;
  out.reserve(cloud.size() * (cloud.has_intensity ? 16 : 12));
  for (const auto& p : cloud.points) {
    write_le_float(out, p.x);
    write_le_float(out, p.y);
    write_le_float(out, p.z);
    if (cloud.has_intensity) write_le_float(out, p.intensity);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_bin: cannot open " + path.string() + ": " + std::strerror(errno));
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("save_bin: write failed for " + path.string() + ": " + std::strerror(errno));
}

void SceneSpec::validate() const {
  if (ring_count < 1) throw std::invalid_argument("SceneSpec: ring_count must be >= 1");
  if (!(max_range > 0)) throw std::invalid_argument("SceneSpec: max_range must be > 0");
  if (azimuth_steps < 1) throw std::invalid_argument("SceneSpec: azimuth_steps must be >= 1");
  if (object_count < 0) throw std::invalid_argument("SceneSpec: object_count must be >= 0");
  if (!(object_min_size > 0) || object_max_size < object_min_size)
    throw std::invalid_argument("SceneSpec: object size range invalid");
  if (!(object_min_height > 0) || object_max_height < object_min_height)
    throw std::invalid_argument("SceneSpec: object height range invalid");
  if (!(object_point_spacing > 0)) throw std::invalid_argument("SceneSpec: object_point_spacing must be > 0");
  if (ground_noise_sigma < 0) throw std::invalid_argument("SceneSpec: ground_noise_sigma must be >= 0");
}

PointCloud generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  PointCloud cloud;
  cloud.has_intensity = spec.with_intensity;
  cloud.source = "synthetic:seed=" + std::to_string(spec.seed);
  const double r2max = spec.max_range * spec.max_range;

  auto emit = [&](double x, double y, double z, double intensity) {
    if (x * x + y * y > r2max) return;
    Point p{static_cast<float>(x), static_cast<float>(y), static_cast<float>(z), 0.0f};
    if (static_cast<double>(p.x) * p.x + static_cast<double>(p.y) * p.y > r2max) return;
    if (spec.with_intensity) p.intensity = static_cast<float>(std::clamp(intensity, 0.0, 1.0));
    cloud.points.push_back(p);
  };

  const double spacing = spec.max_range / spec.ring_count;
  const double two_pi = 6.283185307179586;
  for (int k = 1; k <= spec.ring_count; ++k) {
    const double r = spacing * k;
    const double phase = rng.uniform(0.0, two_pi);
    for (int a = 0; a < spec.azimuth_steps; ++a) {
      const double theta = phase + two_pi * a / spec.azimuth_steps;
      const double z = spec.ground_noise_sigma > 0 ? spec.ground_noise_sigma * rng.normal() : 0.0;
      emit(r * std::cos(theta), r * std::sin(theta), z, 0.15 + 0.05 * rng.uniform());
    }
  }

  for (int o = 0; o < spec.object_count; ++o) {
    const double sx = rng.uniform(spec.object_min_size, spec.object_max_size);
    const double sy = rng.uniform(spec.object_min_size, spec.object_max_size);
    const double h = rng.uniform(spec.object_min_height, spec.object_max_height);
    const double half_diag = 0.5 * std::hypot(sx, sy);
    const double rmax = std::max(0.0, spec.max_range - half_diag);
    const double rc = std::min(rmax, 2.0 + rng.uniform() * std::max(0.0, rmax - 2.0));
    const double ang = rng.uniform(0.0, two_pi);
    const double cx = rc * std::cos(ang), cy = rc * std::sin(ang);
    const double x0 = cx - sx / 2, y0 = cy - sy / 2;
    const double refl = 0.4 + 0.5 * rng.uniform();
    const int nx = std::max(1, static_cast<int>(std::ceil(sx / spec.object_point_spacing)));
    const int ny = std::max(1, static_cast<int>(std::ceil(sy / spec.object_point_spacing)));
    const int nz = std::max(1, static_cast<int>(std::ceil(h / spec.object_point_spacing)));
    for (int iz = 0; iz <= nz; ++iz) {
      const double z = h * iz / nz;
      for (int ix = 0; ix <= nx; ++ix) {
        const double x = x0 + sx * ix / nx;
        emit(x, y0, z, refl);
        emit(x, y0 + sy, z, refl);
      }
      for (int iy = 1; iy < ny; ++iy) {
        const double y = y0 + sy * iy / ny;
        emit(x0, y, z, refl);
        emit(x0 + sx, y, z, refl);
      }
    }
    for (int ix = 1; ix < nx; ++ix)
      for (int iy = 1; iy < ny; ++iy) emit(x0 + sx * ix / nx, y0 + sy * iy / ny, h, refl);
  }
  return cloud;
}

PointCloud crop_to_range(const PointCloud& cloud, const Vec3& range_min, const Vec3& range_max) {
  for (int k = 0; k < 3; ++k) {
    if (!(range_min[k] < range_max[k])) throw std::invalid_argument("crop_to_range: range_min must be < range_max");
  }
  PointCloud out;
  out.has_intensity = cloud.has_intensity;
  out.source = cloud.source;
  for (const auto& p : cloud.points) {
    bool in = true;
    for (std::size_t k = 0; k < 3 && in; ++k) in = p[k] >= range_min[k] && p[k] < range_max[k];
    if (in) out.points.push_back(p);
  }
  return out;
}

}  // namespace voxmae::pointcloud
