#include "voxmae/train/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace voxmae::train {
namespace {

constexpr std::string_view kMagic = "VOXMAECK";

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i64(std::int64_t v) { uint(static_cast<std::uint64_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void str(std::string_view s, bool wide) {
    if (wide) {
      uint(static_cast<std::uint64_t>(s.size()));
    } else {
      uint(static_cast<std::uint32_t>(s.size()));
    }
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}

  std::string_view bytes(std::size_t n, const char* what) {
    if (in_.size() - pos_ < n)
      throw std::runtime_error("checkpoint truncated while reading " + std::string(what) + " at byte " +
                               std::to_string(pos_));
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename U>
  U uint(const char* what) {
    auto s = bytes(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  std::int64_t i64(const char* what) { return static_cast<std::int64_t>(uint<std::uint64_t>(what)); }
  double f64(const char* what) { return std::bit_cast<double>(uint<std::uint64_t>(what)); }
  float f32(const char* what) { return std::bit_cast<float>(uint<std::uint32_t>(what)); }
  bool done() const { return pos_ == in_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

void put_tensor(Checkpoint& ck, std::string name, const Tensor<float>& t) { ck.tensors.push_back({std::move(name), t}); }

const Tensor<float>& need(const Checkpoint& ck, const std::string& name, const numcore::Shape& shape) {
  const auto* t = ck.find(name);
  if (!t) throw std::runtime_error("checkpoint is missing tensor '" + name + "'");
  if (t->shape() != shape)
    throw std::runtime_error("checkpoint tensor '" + name + "' has shape " + numcore::shape_str(t->shape()) +
                             ", expected " + numcore::shape_str(shape));
  return *t;
}

}  // namespace

const Tensor<float>* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

std::string serialize(const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic);
  w.uint(Checkpoint::kVersion);
  w.str(ck.config_text, true);
  w.i64(ck.iteration);
  w.i64(ck.optimizer_step);
  w.uint(ck.run_seed);
  const auto& a = ck.epoch;
  w.uint(a.steps);
  w.f64(a.loss_total);
  w.f64(a.loss_chamfer);
  w.f64(a.loss_count);
  w.f64(a.loss_occ);
  w.uint(a.occ_correct);
  w.uint(a.occ_labeled);
  w.f64(a.count_abs_error);
  w.uint(a.count_targets);
  w.uint(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    w.str(t.name, false);
    w.uint(static_cast<std::uint32_t>(t.value.rank()));
    for (auto d : t.value.shape()) w.uint(static_cast<std::uint64_t>(d));
    for (float v : t.value.values()) w.f32(v);
  }
  return w.take();
}

Checkpoint deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(kMagic.size(), "magic") != kMagic) throw std::runtime_error("not a checkpoint file (bad magic)");
  const auto version = r.uint<std::uint32_t>("version");
  if (version != Checkpoint::kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const auto len = r.uint<std::uint64_t>("config length");
  ck.config_text = std::string(r.bytes(len, "config text"));
  ck.iteration = r.i64("iteration");
  ck.optimizer_step = r.i64("optimizer step");
  ck.run_seed = r.uint<std::uint64_t>("run seed");
  auto& a = ck.epoch;
  a.steps = r.uint<std::uint64_t>("accumulator");
  a.loss_total = r.f64("accumulator");
  a.loss_chamfer = r.f64("accumulator");
  a.loss_count = r.f64("accumulator");
  a.loss_occ = r.f64("accumulator");
  a.occ_correct = r.uint<std::uint64_t>("accumulator");
  a.occ_labeled = r.uint<std::uint64_t>("accumulator");
  a.count_abs_error = r.f64("accumulator");
  a.count_targets = r.uint<std::uint64_t>("accumulator");
  const auto count = r.uint<std::uint32_t>("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    const auto name_len = r.uint<std::uint32_t>("tensor name length");
    t.name = std::string(r.bytes(name_len, "tensor name"));
    const auto rank = r.uint<std::uint32_t>("tensor rank");
    numcore::Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.uint<std::uint64_t>("tensor dims"));
    const std::size_t n = numcore::shape_size(shape);
    if (n > (bytes.size() - r.pos()) / 4)
      throw std::runtime_error("checkpoint truncated in tensor '" + t.name + "'");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32("tensor data");
    t.value = Tensor<float>(shape, std::move(data));
    ck.tensors.push_back(std::move(t));
  }
  if (!r.done()) throw std::runtime_error("trailing bytes after checkpoint at byte " + std::to_string(r.pos()));
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = serialize(ck);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write checkpoint " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("error writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return deserialize(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void store_state(Checkpoint& ck, const model::ModelParams<float>& params, const OptimState& optim) {
  ck.tensors.clear();
  const auto ps = params.parameters();
  for (const auto* p : ps) put_tensor(ck, "param/" + p->name, p->value);
  if (!optim.m.empty()) {
    if (optim.m.size() != ps.size()) throw std::invalid_argument("optimizer state does not match the parameters");
    for (std::size_t i = 0; i < ps.size(); ++i) put_tensor(ck, "adam.m/" + ps[i]->name, optim.m[i]);
    for (std::size_t i = 0; i < ps.size(); ++i) put_tensor(ck, "adam.v/" + ps[i]->name, optim.v[i]);
  }
  ck.optimizer_step = optim.step;
}

void restore_state(const Checkpoint& ck, model::ModelParams<float>& params, OptimState& optim) {
  auto ps = params.parameters();
  for (auto* p : ps) p->value = need(ck, "param/" + p->name, p->value.shape());
  optim.step = ck.optimizer_step;
  optim.m.clear();
  optim.v.clear();
  if (ps.empty() || !ck.find("adam.m/" + ps.front()->name)) {
    if (ck.optimizer_step != 0) throw std::runtime_error("checkpoint has optimizer steps but no moments");
    return;
  }
  for (auto* p : ps) optim.m.push_back(need(ck, "adam.m/" + p->name, p->value.shape()));
  for (auto* p : ps) optim.v.push_back(need(ck, "adam.v/" + p->name, p->value.shape()));
}

}  // namespace voxmae::train
