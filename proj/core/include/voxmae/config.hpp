#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "voxmae/losses.hpp"
#include "voxmae/model/model.hpp"
#include "voxmae/pointcloud.hpp"
#include "voxmae/train/optim.hpp"
#include "voxmae/voxelizer.hpp"

namespace voxmae::config {

// One row of the defaults table.
struct KeySpec {
  std::string_view section;
  std::string_view key;
  std::string_view default_value;
  std::string_view help;
};

std::span<const KeySpec> config_keys();
std::span<const std::string_view> preset_names();

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct MaskSettings {
  double ratio = 0.7;
  double empty_fraction = 0.1;
  std::optional<std::size_t> max_empty;
};

struct LossSettings {
  losses::LossWeights weights;
  losses::LossToggles toggles;
  losses::Aggregation aggregation = losses::Aggregation::sum;
  std::size_t max_gt_points = 100;
};

struct OptimSettings {
  train::AdamWConfig adam;
  train::Schedule schedule;  // total_iters is filled in from the dataset size
  std::size_t epochs = 200;
  std::size_t batch_size = 4;
  std::uint64_t run_seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 = final checkpoint only
};

enum class DataSource { synthetic, directory };

struct DataSettings {
  DataSource source = DataSource::synthetic;
  std::string dir;
  int floats_per_point = 4;
  std::size_t scenes = 256;
  std::uint64_t scene_seed = 0;
  pointcloud::SceneSpec scene;
};

// Flat `key = value` lines under [grid] [model] [mask] [loss] [optim]
// [data] headers. '#' starts a comment. Unknown sections and keys are
// errors.
class RunConfig {
 public:
  static RunConfig defaults();
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  // Overrides only the keys present in `text`; nothing changes on error.
  void update(std::string_view text);

  void set(std::string_view dotted_key, std::string value);
  const std::string& get(std::string_view dotted_key) const;
  void apply_preset(std::string_view name);

  // Every key in table order; parse(to_text()) round-trips.
  std::string to_text() const;
  // Canonical text of the sections that define the network's shape.
  std::string architecture_text() const;
  std::string architecture_digest() const;

  // All problems at once; empty when valid.
  std::vector<std::string> validate() const;

  voxelizer::GridConfig grid() const;
  model::ModelConfig model() const;
  MaskSettings mask() const;
  LossSettings loss() const;
  OptimSettings optim() const;
  DataSettings data() const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

std::string read_config_file(const std::filesystem::path& path);
std::string fnv1a_hex(std::string_view text);

// Human-readable listing of every key with its default, for --help.
std::string describe_keys();

}  // namespace voxmae::config
