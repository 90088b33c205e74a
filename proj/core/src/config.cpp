#include "voxmae/config.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace voxmae::config {
namespace {

// Single table of defaults.
constexpr std::array kKeys = {
    KeySpec{"grid", "voxel_size", "0.5,0.5,8", "voxel edge lengths x,y,z in meters"},
    KeySpec{"grid", "range_min", "-50,-50,-3", "lower corner of the point cloud range (inclusive)"},
    KeySpec{"grid", "range_max", "50,50,5", "upper corner of the point cloud range (exclusive)"},

    KeySpec{"model", "d_model", "128", "token width"},
    KeySpec{"model", "n_enc_layers", "8", "encoder layers"},
    KeySpec{"model", "n_dec_layers", "2", "decoder layers"},
    KeySpec{"model", "n_heads", "8", "attention heads"},
    KeySpec{"model", "ffn_hidden", "256", "feed-forward hidden width"},
    KeySpec{"model", "vfe_hidden", "64", "voxel feature encoder first linear width"},
    KeySpec{"model", "window_extent", "16,16", "attention window in voxels"},
    KeySpec{"model", "train_levels", "30,60,100,200,250", "padding levels during training"},
    KeySpec{"model", "eval_levels", "30,60,100,200,256", "padding levels during evaluation"},
    KeySpec{"model", "n_points_predicted", "10", "points predicted per voxel"},
    KeySpec{"model", "use_intensity", "false", "feed point intensity to the voxel encoder"},
    KeySpec{"model", "positional", "sinusoidal", "positional encoding: sinusoidal | learned"},
    KeySpec{"model", "pooling", "max", "voxel feature pooling: max | mean"},

    KeySpec{"mask", "ratio", "0.7", "fraction of non-empty voxels hidden from the encoder"},
    KeySpec{"mask", "empty_fraction", "0.1", "fraction of empty cells sampled as decoys"},
    KeySpec{"mask", "max_empty", "-1", "cap on sampled decoys per scene; -1 = no cap"},

    KeySpec{"loss", "alpha_c", "1", "Chamfer weight"},
    KeySpec{"loss", "alpha_np", "0.1", "point-count weight"},
    KeySpec{"loss", "alpha_occ", "1", "occupancy weight"},
    KeySpec{"loss", "chamfer", "true", "enable the Chamfer term"},
    KeySpec{"loss", "count", "true", "enable the point-count term"},
    KeySpec{"loss", "occupancy", "true", "enable the occupancy term"},
    KeySpec{"loss", "chamfer_aggregation", "sum", "sum | mean over masked voxels"},
    KeySpec{"loss", "max_gt_points", "100", "ground-truth points kept per voxel for Chamfer"},

    KeySpec{"optim", "beta1", "0.95", "AdamW beta1"},
    KeySpec{"optim", "beta2", "0.99", "AdamW beta2"},
    KeySpec{"optim", "weight_decay", "0.01", "AdamW decoupled weight decay"},
    KeySpec{"optim", "eps", "1e-8", "AdamW epsilon"},
    KeySpec{"optim", "warmup_start_lr", "5e-5", "learning rate at iteration 0"},
    KeySpec{"optim", "peak_lr", "5e-4", "learning rate at the end of warmup"},
    KeySpec{"optim", "warmup_iters", "1000", "linear warmup iterations"},
    KeySpec{"optim", "final_lr", "1e-7", "learning rate at the last iteration"},
    KeySpec{"optim", "epochs", "200", "training epochs"},
    KeySpec{"optim", "batch_size", "4", "scenes per optimizer step"},
    KeySpec{"optim", "run_seed", "0", "seed for initialization, masking and data order"},
    KeySpec{"optim", "checkpoint_every", "0", "checkpoint cadence in epochs; 0 = final only"},

    KeySpec{"data", "source", "synthetic", "synthetic | directory"},
    KeySpec{"data", "dir", "", "directory of .bin scans when source = directory"},
    KeySpec{"data", "floats_per_point", "4", "record stride of .bin scans (3, 4 or 5)"},
    KeySpec{"data", "scenes", "256", "number of synthetic scenes"},
    KeySpec{"data", "scene_seed", "0", "base seed of the synthetic scenes"},
    KeySpec{"data", "ring_count", "8", "ground rings per synthetic scene"},
    KeySpec{"data", "max_range", "50", "synthetic scene radius in meters"},
    KeySpec{"data", "azimuth_steps", "180", "ground returns per ring"},
    KeySpec{"data", "object_count", "4", "boxes per synthetic scene"},
    KeySpec{"data", "object_min_size", "1.5", "box footprint edge lower bound (m)"},
    KeySpec{"data", "object_max_size", "4", "box footprint edge upper bound (m)"},
    KeySpec{"data", "object_min_height", "1", "box height lower bound (m)"},
    KeySpec{"data", "object_max_height", "2.5", "box height upper bound (m)"},
    KeySpec{"data", "object_point_spacing", "0.25", "surface sampling step on boxes (m)"},
    KeySpec{"data", "ground_noise_sigma", "0.02", "ground height noise (m)"},
    KeySpec{"data", "with_intensity", "true", "synthesize intensity values"},
};

constexpr std::array<std::string_view, 6> kSections = {"grid", "model", "mask", "loss", "optim", "data"};

struct PresetValue {
  std::string_view key;
  std::string_view value;
};

// Desk-scale configuration exercised by the acceptance suite.
constexpr std::array kTinyPreset = {
    PresetValue{"model.d_model", "32"},       PresetValue{"model.n_enc_layers", "2"},
    PresetValue{"model.n_dec_layers", "1"},   PresetValue{"model.n_heads", "2"},
    PresetValue{"model.ffn_hidden", "64"},    PresetValue{"model.vfe_hidden", "32"},
    PresetValue{"mask.max_empty", "256"},     PresetValue{"loss.chamfer_aggregation", "mean"},
    PresetValue{"optim.epochs", "20"},        PresetValue{"optim.warmup_iters", "100"},
    PresetValue{"optim.peak_lr", "2e-3"},     PresetValue{"model.positional", "learned"},
};

constexpr std::array<std::string_view, 2> kPresets = {"paper", "tiny"};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

const KeySpec* find_key(std::string_view dotted) {
  for (const auto& k : kKeys) {
    if (dotted.size() == k.section.size() + 1 + k.key.size() && dotted.starts_with(k.section) &&
        dotted[k.section.size()] == '.' && dotted.substr(k.section.size() + 1) == k.key)
      return &k;
  }
  return nullptr;
}

std::string dotted(const KeySpec& k) { return std::string(k.section) + "." + std::string(k.key); }

// Typed extraction that records problems instead of throwing.
class Reader {
 public:
  Reader(const std::map<std::string, std::string, std::less<>>& values, std::vector<std::string>& errors)
      : values_(values), errors_(errors) {}

  const std::string& raw(std::string_view key) const { return values_.find(key)->second; }

  double real(std::string_view key) {
    const auto& s = raw(key);
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad(key, "a number");
    return v;
  }

  std::int64_t integer(std::string_view key) {
    const auto& s = raw(key);
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) bad(key, "an integer");
    return v;
  }

  std::size_t count(std::string_view key) {
    const auto v = integer(key);
    if (v < 0) {
      bad(key, "a non-negative integer");
      return 0;
    }
    return static_cast<std::size_t>(v);
  }

  bool boolean(std::string_view key) {
    const auto& s = raw(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    bad(key, "true or false");
    return false;
  }

  std::vector<double> reals(std::string_view key, std::size_t expected) {
    std::vector<double> out;
    for (const auto& part : split_list(raw(key))) {
      double v = 0;
      auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
      if (ec != std::errc() || p != part.data() + part.size() || part.empty()) {
        bad(key, "a comma-separated list of numbers");
        return std::vector<double>(expected ? expected : 1, 0.0);
      }
      out.push_back(v);
    }
    if (expected && out.size() != expected) {
      bad(key, std::to_string(expected) + " comma-separated numbers");
      out.resize(expected, 1.0);
    }
    return out;
  }

  std::vector<std::size_t> counts(std::string_view key) {
    std::vector<std::size_t> out;
    for (double v : reals(key, 0)) {
      if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v))) {
        bad(key, "a list of non-negative integers");
        return {1};
      }
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }

  std::string choice(std::string_view key, std::initializer_list<std::string_view> options) {
    const auto& s = raw(key);
    for (auto o : options)
      if (s == o) return s;
    std::string list;
    for (auto o : options) list += (list.empty() ? "" : " | ") + std::string(o);
    bad(key, "one of " + list);
    return std::string(*options.begin());
  }

  void check(bool ok, std::string_view key, const std::string& what) {
    if (!ok) errors_.push_back(std::string(key) + ": " + what);
  }

 private:
  void bad(std::string_view key, const std::string& what) {
    errors_.push_back(std::string(key) + " = '" + raw(key) + "': expected " + what);
  }

  const std::map<std::string, std::string, std::less<>>& values_;
  std::vector<std::string>& errors_;
};

template <typename F>
auto guarded(std::vector<std::string>& errors, const std::string& where, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    errors.push_back(where + ": " + e.what());
  }
}

voxelizer::GridConfig read_grid(Reader& r, std::vector<std::string>& errors) {
  voxelizer::GridConfig g;
  const auto vs = r.reals("grid.voxel_size", 3);
  const auto lo = r.reals("grid.range_min", 3);
  const auto hi = r.reals("grid.range_max", 3);
  for (int k = 0; k < 3; ++k) {
    g.voxel_size[k] = vs[k];
    g.range_min[k] = lo[k];
    g.range_max[k] = hi[k];
  }
  guarded(errors, "grid", [&] { g.validate(); });
  return g;
}

model::ModelConfig read_model(Reader& r, std::vector<std::string>& errors) {
  model::ModelConfig m;
  m.d_model = r.count("model.d_model");
  m.n_enc_layers = r.count("model.n_enc_layers");
  m.n_dec_layers = r.count("model.n_dec_layers");
  m.n_heads = r.count("model.n_heads");
  m.ffn_hidden = r.count("model.ffn_hidden");
  m.vfe_hidden = r.count("model.vfe_hidden");
  const auto w = r.counts("model.window_extent");
  if (w.size() == 2) {
    m.window = {static_cast<std::int32_t>(w[0]), static_cast<std::int32_t>(w[1])};
  } else {
    r.check(false, "model.window_extent", "expected two integers");
  }
  m.levels.train = r.counts("model.train_levels");
  m.levels.eval = r.counts("model.eval_levels");
  m.n_points = r.count("model.n_points_predicted");
  m.use_intensity = r.boolean("model.use_intensity");
  m.positional = r.choice("model.positional", {"sinusoidal", "learned"}) == "learned" ? model::PositionalEncoding::learned
                                                                                      : model::PositionalEncoding::sinusoidal;
  m.pooling = r.choice("model.pooling", {"max", "mean"}) == "mean" ? model::Pooling::mean : model::Pooling::max;
  guarded(errors, "model", [&] { m.validate(); });
  return m;
}

MaskSettings read_mask(Reader& r) {
  MaskSettings s;
  s.ratio = r.real("mask.ratio");
  s.empty_fraction = r.real("mask.empty_fraction");
  r.check(s.ratio >= 0 && s.ratio <= 1, "mask.ratio", "must be in [0, 1]");
  r.check(s.empty_fraction >= 0 && s.empty_fraction <= 1, "mask.empty_fraction", "must be in [0, 1]");
  const auto cap = r.integer("mask.max_empty");
  r.check(cap >= -1, "mask.max_empty", "must be -1 (no cap) or >= 0");
  if (cap >= 0) s.max_empty = static_cast<std::size_t>(cap);
  return s;
}

LossSettings read_loss(Reader& r, std::vector<std::string>& errors) {
  LossSettings s;
  s.weights.alpha_c = r.real("loss.alpha_c");
  s.weights.alpha_np = r.real("loss.alpha_np");
  s.weights.alpha_occ = r.real("loss.alpha_occ");
  s.toggles.chamfer = r.boolean("loss.chamfer");
  s.toggles.count = r.boolean("loss.count");
  s.toggles.occupancy = r.boolean("loss.occupancy");
  s.aggregation = r.choice("loss.chamfer_aggregation", {"sum", "mean"}) == "mean" ? losses::Aggregation::mean
                                                                                  : losses::Aggregation::sum;
  s.max_gt_points = r.count("loss.max_gt_points");
  r.check(s.max_gt_points > 0, "loss.max_gt_points", "must be positive");
  guarded(errors, "loss", [&] { s.weights.validate(); });
  guarded(errors, "loss", [&] { s.toggles.validate(); });
  return s;
}

OptimSettings read_optim(Reader& r) {
  OptimSettings s;
  s.adam.beta1 = r.real("optim.beta1");
  s.adam.beta2 = r.real("optim.beta2");
  s.adam.weight_decay = r.real("optim.weight_decay");
  s.adam.eps = r.real("optim.eps");
  r.check(s.adam.beta1 >= 0 && s.adam.beta1 < 1, "optim.beta1", "must be in [0, 1)");
  r.check(s.adam.beta2 >= 0 && s.adam.beta2 < 1, "optim.beta2", "must be in [0, 1)");
  r.check(s.adam.weight_decay >= 0, "optim.weight_decay", "must be >= 0");
  r.check(s.adam.eps > 0, "optim.eps", "must be > 0");
  s.schedule.warmup_start_lr = r.real("optim.warmup_start_lr");
  s.schedule.peak_lr = r.real("optim.peak_lr");
  s.schedule.warmup_iters = r.integer("optim.warmup_iters");
  s.schedule.final_lr = r.real("optim.final_lr");
  r.check(s.schedule.warmup_start_lr >= 0, "optim.warmup_start_lr", "must be >= 0");
  r.check(s.schedule.peak_lr > 0, "optim.peak_lr", "must be > 0");
  r.check(s.schedule.warmup_iters >= 0, "optim.warmup_iters", "must be >= 0");
  r.check(s.schedule.final_lr >= 0, "optim.final_lr", "must be >= 0");
  s.epochs = r.count("optim.epochs");
  s.batch_size = r.count("optim.batch_size");
  r.check(s.batch_size > 0, "optim.batch_size", "must be positive");
  s.run_seed = static_cast<std::uint64_t>(r.integer("optim.run_seed"));
  s.checkpoint_every = r.count("optim.checkpoint_every");
  return s;
}

DataSettings read_data(Reader& r, std::vector<std::string>& errors) {
  DataSettings s;
  s.source = r.choice("data.source", {"synthetic", "directory"}) == "directory" ? DataSource::directory
                                                                              : DataSource::synthetic;
  s.dir = r.raw("data.dir");
  s.floats_per_point = static_cast<int>(r.integer("data.floats_per_point"));
  r.check(s.floats_per_point >= 3 && s.floats_per_point <= 5, "data.floats_per_point", "must be 3, 4 or 5");
  r.check(s.source == DataSource::synthetic || !s.dir.empty(), "data.dir", "required when data.source = directory");
  s.scenes = r.count("data.scenes");
  s.scene_seed = static_cast<std::uint64_t>(r.integer("data.scene_seed"));
  auto& sc = s.scene;
  sc.ring_count = static_cast<int>(r.integer("data.ring_count"));
  sc.max_range = r.real("data.max_range");
  sc.azimuth_steps = static_cast<int>(r.integer("data.azimuth_steps"));
  sc.object_count = static_cast<int>(r.integer("data.object_count"));
  sc.object_min_size = r.real("data.object_min_size");
  sc.object_max_size = r.real("data.object_max_size");
  sc.object_min_height = r.real("data.object_min_height");
  sc.object_max_height = r.real("data.object_max_height");
  sc.object_point_spacing = r.real("data.object_point_spacing");
  sc.ground_noise_sigma = r.real("data.ground_noise_sigma");
  sc.with_intensity = r.boolean("data.with_intensity");
  sc.seed = s.scene_seed;
  guarded(errors, "data", [&] { sc.validate(); });
  return s;
}

template <typename F>
auto read_or_throw(const std::map<std::string, std::string, std::less<>>& values, F&& f) {
  std::vector<std::string> errors;
  Reader r(values, errors);
  auto out = f(r, errors);
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return out;
}

std::string join_problems(const std::vector<std::string>& problems) {
  std::string s = "invalid configuration:";
  for (const auto& p : problems) s += "\n  " + p;
  return s;
}

}  // namespace

std::span<const KeySpec> config_keys() { return kKeys; }
std::span<const std::string_view> preset_names() { return kPresets; }

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join_problems(problems)), problems_(std::move(problems)) {}

RunConfig RunConfig::defaults() {
  RunConfig c;
  for (const auto& k : kKeys) c.values_[dotted(k)] = std::string(k.default_value);
  return c;
}

RunConfig RunConfig::parse(std::string_view text) {
  RunConfig c = defaults();
  c.update(text);
  return c;
}

void RunConfig::update(std::string_view text) {
  std::map<std::string, std::string, std::less<>> staged;
  std::vector<std::string> problems;
  std::string section;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    if (t.front() == '[') {
      if (t.back() != ']') {
        problems.push_back(where + ": malformed section header '" + t + "'");
        continue;
      }
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      bool known = false;
      for (auto s : kSections) known = known || s == section;
      if (!known) problems.push_back(where + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      problems.push_back(where + ": expected key = value, got '" + t + "'");
      continue;
    }
    if (section.empty()) {
      problems.push_back(where + ": key outside of any section");
      continue;
    }
    const std::string key = section + "." + trim(std::string_view(t).substr(0, eq));
    if (!find_key(key)) {
      problems.push_back(where + ": unknown key '" + key + "'");
      continue;
    }
    staged[key] = trim(std::string_view(t).substr(eq + 1));
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  RunConfig next = *this;
  for (auto& [k, v] : staged) next.values_[k] = std::move(v);
  if (auto invalid = next.validate(); !invalid.empty()) throw ConfigError(std::move(invalid));
  *this = std::move(next);
}

std::string read_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

RunConfig RunConfig::load(const std::filesystem::path& path) { return parse(read_config_file(path)); }

void RunConfig::set(std::string_view key, std::string value) {
  if (!find_key(key)) throw ConfigError({"unknown key '" + std::string(key) + "'"});
  values_[std::string(key)] = trim(value);
}

const std::string& RunConfig::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError({"unknown key '" + std::string(key) + "'"});
  return it->second;
}

void RunConfig::apply_preset(std::string_view name) {
  if (name == "paper") {
    *this = defaults();
    return;
  }
  if (name == "tiny") {
    for (const auto& [k, v] : kTinyPreset) set(k, std::string(v));
    return;
  }
  throw ConfigError({"unknown preset '" + std::string(name) + "' (expected paper | tiny)"});
}

std::string RunConfig::to_text() const {
  std::string out;
  std::string_view section;
  for (const auto& k : kKeys) {
    if (k.section != section) {
      if (!section.empty()) out += "\n";
      section = k.section;
      out += "[" + std::string(section) + "]\n";
    }
    out += std::string(k.key) + " = " + values_.at(dotted(k)) + "\n";
  }
  return out;
}

std::string RunConfig::architecture_text() const {
  std::string out;
  for (const auto& k : kKeys) {
    if (k.section == "grid" || k.section == "model")
      out += dotted(k) + " = " + values_.at(dotted(k)) + "\n";
  }
  return out;
}

std::string RunConfig::architecture_digest() const { return fnv1a_hex(architecture_text()); }

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> errors;
  Reader r(values_, errors);
  read_grid(r, errors);
  read_model(r, errors);
  read_mask(r);
  read_loss(r, errors);
  read_optim(r);
  read_data(r, errors);
  return errors;
}

voxelizer::GridConfig RunConfig::grid() const {
  return read_or_throw(values_, [](Reader& r, std::vector<std::string>& e) { return read_grid(r, e); });
}
model::ModelConfig RunConfig::model() const {
  return read_or_throw(values_, [](Reader& r, std::vector<std::string>& e) { return read_model(r, e); });
}
MaskSettings RunConfig::mask() const {
  return read_or_throw(values_, [](Reader& r, std::vector<std::string>&) { return read_mask(r); });
}
LossSettings RunConfig::loss() const {
  return read_or_throw(values_, [](Reader& r, std::vector<std::string>& e) { return read_loss(r, e); });
}
OptimSettings RunConfig::optim() const {
  return read_or_throw(values_, [](Reader& r, std::vector<std::string>&) { return read_optim(r); });
}
DataSettings RunConfig::data() const {
  return read_or_throw(values_, [](Reader& r, std::vector<std::string>& e) { return read_data(r, e); });
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string describe_keys() {
  std::string out = "Configuration keys (section.key = default):\n";
  for (const auto& k : kKeys) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "  %-28s = %-20s %s\n", dotted(k).c_str(), std::string(k.default_value).c_str(),
                  std::string(k.help).c_str());
    out += buf;
  }
  out += "Presets: paper (all defaults above), tiny (";
  for (std::size_t i = 0; i < kTinyPreset.size(); ++i) {
    out += (i ? ", " : "") + std::string(kTinyPreset[i].key) + "=" + std::string(kTinyPreset[i].value);
  }
  out += ")\n";
  return out;
}

}  // namespace voxmae::config
