#include "voxmae/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "voxmae/random.hpp"

namespace voxmae::model {

using numcore::Shape;
using voxelizer::VoxelIndex;

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (d_model == 0 || d_model % 4 != 0) fail("d_model must be a positive multiple of 4");
  if (n_heads == 0 || d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (ffn_hidden == 0) fail("ffn_hidden must be positive");
  if (vfe_hidden == 0) fail("vfe_hidden must be positive");
  if (n_points == 0) fail("n_points_predicted must be positive");
  if (window[0] <= 0 || window[1] <= 0) fail("window_extent must be positive");
  if (!(ln_eps > 0)) fail("layer norm eps must be positive");
  levels.validate();
}

namespace {

template <typename T>
Parameter<T> xavier(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor<T> w({in, out});
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  return Parameter<T>(name, std::move(w));
}

template <typename T>
LinearParams<T> make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  return {xavier<T>(name + ".weight", in, out, rng), Parameter<T>(name + ".bias", Tensor<T>({out}))};
}

template <typename T>
NormParams<T> make_norm(const std::string& name, std::size_t d) {
  return {Parameter<T>(name + ".gain", Tensor<T>({d}, T(1))), Parameter<T>(name + ".bias", Tensor<T>({d}))};
}

template <typename T>
BlockParams<T> make_block(const std::string& name, const ModelConfig& c, Rng& rng) {
  BlockParams<T> b;
  b.norm1 = make_norm<T>(name + ".norm1", c.d_model);
  b.qkv = make_linear<T>(name + ".attn.qkv", c.d_model, 3 * c.d_model, rng);
  b.proj = make_linear<T>(name + ".attn.proj", c.d_model, c.d_model, rng);
  b.norm2 = make_norm<T>(name + ".norm2", c.d_model);
  b.ffn1 = make_linear<T>(name + ".ffn.linear1", c.d_model, c.ffn_hidden, rng);
  b.ffn2 = make_linear<T>(name + ".ffn.linear2", c.ffn_hidden, c.d_model, rng);
  return b;
}

template <typename T, typename F>
void visit(ModelParams<T>& m, F&& f) {
  auto lin = [&](LinearParams<T>& l) {
    f(l.weight);
    f(l.bias);
  };
  auto norm = [&](NormParams<T>& n) {
    f(n.gain);
    f(n.bias);
  };
  auto block = [&](BlockParams<T>& b) {
    norm(b.norm1);
    lin(b.qkv);
    lin(b.proj);
    norm(b.norm2);
    lin(b.ffn1);
    lin(b.ffn2);
  };
  lin(m.vfe1);
  lin(m.vfe2);
  for (auto& b : m.encoder) block(b);
  for (auto& b : m.decoder) block(b);
  f(m.mask_token);
  if (!m.pos_table.value.empty()) f(m.pos_table);
  lin(m.point_head);
  lin(m.count_head);
  lin(m.occupancy_head);
}

template <typename T>
Var param(Tape<T>& t, Parameter<T>& p) {
  return t.parameter(p);
}

template <typename T>
Var apply_linear(Tape<T>& t, LinearParams<T>& l, Var x) {
  return numcore::linear(t, x, param(t, l.weight), param(t, l.bias));
}

template <typename T>
Var apply_norm(Tape<T>& t, NormParams<T>& n, Var x, double eps) {
  return numcore::layer_norm(t, x, param(t, n.gain), param(t, n.bias), static_cast<T>(eps));
}

double order_free_mean(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

template <typename T>
std::vector<Parameter<T>*> ModelParams<T>::parameters() {
  std::vector<Parameter<T>*> out;
  visit(*this, [&](Parameter<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> ModelParams<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  visit(const_cast<ModelParams<T>&>(*this), [&](Parameter<T>& p) { out.push_back(&p); });
  return out;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& c, const GridConfig& grid, std::uint64_t seed) {
  c.validate();
  Rng rng(seed);
  ModelParams<T> m;
  m.vfe1 = make_linear<T>("vfe.linear1", c.vfe_input_dim(), c.vfe_hidden, rng);
  m.vfe2 = make_linear<T>("vfe.linear2", c.vfe_hidden, c.d_model, rng);
  for (std::size_t i = 0; i < c.n_enc_layers; ++i) m.encoder.push_back(make_block<T>("encoder." + std::to_string(i), c, rng));
  for (std::size_t i = 0; i < c.n_dec_layers; ++i) m.decoder.push_back(make_block<T>("decoder." + std::to_string(i), c, rng));
  Tensor<T> token({1, c.d_model});
  for (auto& v : token.values()) v = static_cast<T>(0.02 * rng.normal());
  m.mask_token = Parameter<T>("mask_token", std::move(token));
  if (c.positional == PositionalEncoding::learned) {
    const auto s = grid.shape();
    Tensor<T> table({static_cast<std::size_t>(s.x) * static_cast<std::size_t>(s.y), c.d_model});
    for (auto& v : table.values()) v = static_cast<T>(0.02 * rng.normal());
    m.pos_table = Parameter<T>("pos_table", std::move(table));
  }
  m.point_head = make_linear<T>("head.points", c.d_model, 3 * c.n_points, rng);
  m.count_head = make_linear<T>("head.count", c.d_model, 1, rng);
  m.occupancy_head = make_linear<T>("head.occupancy", c.d_model, 1, rng);
  return m;
}

template <typename U, typename T>
ModelParams<U> cast_params(const ModelParams<T>& src) {
  ModelParams<U> dst;
  auto lin = [](const LinearParams<T>& l) { return LinearParams<U>{l.weight.template cast<U>(), l.bias.template cast<U>()}; };
  auto norm = [](const NormParams<T>& n) { return NormParams<U>{n.gain.template cast<U>(), n.bias.template cast<U>()}; };
  auto block = [&](const BlockParams<T>& b) {
    return BlockParams<U>{norm(b.norm1), lin(b.qkv), lin(b.proj), norm(b.norm2), lin(b.ffn1), lin(b.ffn2)};
  };
  dst.vfe1 = lin(src.vfe1);
  dst.vfe2 = lin(src.vfe2);
  for (const auto& b : src.encoder) dst.encoder.push_back(block(b));
  for (const auto& b : src.decoder) dst.decoder.push_back(block(b));
  dst.mask_token = src.mask_token.template cast<U>();
  dst.pos_table = src.pos_table.template cast<U>();
  dst.point_head = lin(src.point_head);
  dst.count_head = lin(src.count_head);
  dst.occupancy_head = lin(src.occupancy_head);
  return dst;
}

template <typename T>
std::vector<T> positional_embedding(const VoxelIndex& index, const GridConfig& grid, std::size_t d) {
  if (!grid.contains(index)) throw std::out_of_range("positional_embedding: index outside the grid");
  if (d == 0 || d % 4 != 0) throw std::invalid_argument("positional_embedding: d must be a multiple of 4");
  const std::size_t quarter = d / 4;
  std::vector<T> out(d);
  const double coord[2] = {static_cast<double>(index.x), static_cast<double>(index.y)};
  for (std::size_t axis = 0; axis < 2; ++axis) {
    for (std::size_t k = 0; k < quarter; ++k) {
      const double freq = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(quarter));
      out[axis * 2 * quarter + 2 * k] = static_cast<T>(std::sin(coord[axis] * freq));
      out[axis * 2 * quarter + 2 * k + 1] = static_cast<T>(std::cos(coord[axis] * freq));
    }
  }
  return out;
}

template <typename T>
Var positional_rows(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config, const GridConfig& grid,
                    std::span<const VoxelIndex> indices) {
  const std::size_t d = config.d_model;
  if (config.positional == PositionalEncoding::learned) {
    const auto s = grid.shape();
    std::vector<std::size_t> rows;
    rows.reserve(indices.size());
    for (const auto& i : indices) {
      if (!grid.contains(i)) throw std::out_of_range("positional_rows: index outside the grid");
      rows.push_back(static_cast<std::size_t>(i.x) * static_cast<std::size_t>(s.y) + static_cast<std::size_t>(i.y));
    }
    return numcore::gather_rows(tape, tape.parameter(params.pos_table), std::move(rows));
  }
  Tensor<T> out({indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto row = positional_embedding<T>(indices[r], grid, d);
    std::copy(row.begin(), row.end(), out.row(r));
  }
  return tape.constant(std::move(out));
}

template <typename T>
Var embed_voxels(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config, const GridConfig& grid,
                 std::span<const Voxel* const> voxels) {
  const std::size_t in_dim = config.vfe_input_dim();
  std::size_t total = 0;
  for (const auto* v : voxels) {
    if (v->points.empty()) throw std::invalid_argument("embed_voxel: voxel has no points");
    total += v->points.size();
  }
  Tensor<T> feats({total, in_dim});
  std::vector<std::size_t> segment;
  segment.reserve(total);
  std::size_t row = 0;
  for (std::size_t s = 0; s < voxels.size(); ++s) {
    const Voxel& v = *voxels[s];
    const auto center = voxelizer::voxel_center(v.index, grid);
    double mean[3];
    for (std::size_t k = 0; k < 3; ++k) {
      std::vector<double> comp;
      comp.reserve(v.points.size());
      for (const auto& p : v.points) comp.push_back(p[k]);
      mean[k] = order_free_mean(std::move(comp));
    }
    for (const auto& p : v.points) {
      T* f = feats.row(row++);
      for (std::size_t k = 0; k < 3; ++k) {
        f[k] = static_cast<T>(p[k] - mean[k]);
        f[3 + k] = static_cast<T>(p[k] - center[k]);
      }
      if (config.use_intensity) f[6] = static_cast<T>(p.intensity);
      segment.push_back(s);
    }
  }
  Var x = tape.constant(std::move(feats));
  x = numcore::relu(tape, apply_linear(tape, params.vfe1, x));
  x = numcore::relu(tape, apply_linear(tape, params.vfe2, x));
  if (config.pooling == Pooling::mean) return numcore::segment_mean(tape, x, std::move(segment), voxels.size());
  return numcore::segment_max(tape, x, std::move(segment), voxels.size());
}

template <typename T>
Tensor<T> embed_voxel(const Voxel& voxel, ModelParams<T>& params, const ModelConfig& config, const GridConfig& grid) {
  Tape<T> tape;
  const Voxel* ptr = &voxel;
  Var out = embed_voxels(tape, params, config, grid, std::span<const Voxel* const>(&ptr, 1));
  return tape.value(out);
}

template <typename T>
Var transformer_block(Tape<T>& tape, BlockParams<T>& block, const ModelConfig& config, Var x,
                      std::span<const VoxelIndex> indices, bool shifted, const ForwardOptions& options) {
  const auto parts = partition(indices, config.window, shifted);
  const auto batch = bucket_and_pad(parts, config.levels, options.train, options.drop_seed);
  Var h = apply_norm(tape, block.norm1, x, config.ln_eps);
  Var qkv = apply_linear(tape, block.qkv, h);
  Var attn = numcore::window_attention(tape, qkv, batch.slot_groups(), config.n_heads);
  x = numcore::add(tape, x, apply_linear(tape, block.proj, attn));
  Var h2 = apply_norm(tape, block.norm2, x, config.ln_eps);
  Var f = numcore::gelu(tape, apply_linear(tape, block.ffn1, h2));
  return numcore::add(tape, x, apply_linear(tape, block.ffn2, f));
}

namespace {

template <typename T>
TokenSeq<T> run_stack(Tape<T>& tape, std::vector<BlockParams<T>>& blocks, const ModelConfig& config,
                      TokenSeq<T> tokens, const ForwardOptions& options, std::uint64_t stream) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    ForwardOptions layer = options;
    layer.drop_seed = mix(options.drop_seed, stream * 1000 + i);
    tokens.features = transformer_block(tape, blocks[i], config, tokens.features, tokens.indices, i % 2 == 1, layer);
  }
  return tokens;
}

}  // namespace

template <typename T>
TokenSeq<T> encoder_forward(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config, TokenSeq<T> tokens,
                            const ForwardOptions& options) {
  return run_stack(tape, params.encoder, config, std::move(tokens), options, 1);
}

template <typename T>
TokenSeq<T> decoder_forward(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config, TokenSeq<T> tokens,
                            const ForwardOptions& options) {
  return run_stack(tape, params.decoder, config, std::move(tokens), options, 2);
}

template <typename T>
TokenSeq<T> assemble_decoder_input(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config,
                                   const GridConfig& grid, const TokenSeq<T>& encoded_visible,
                                   const masking::MaskPlan& plan) {
  if (encoded_visible.indices != plan.visible) {
    throw std::invalid_argument("assemble_decoder_input: encoded tokens (" + std::to_string(encoded_visible.size()) +
                                ") do not cover exactly the plan's visible set (" +
                                std::to_string(plan.visible.size()) + ")");
  }
  TokenSeq<T> out = encoded_visible;
  std::vector<VoxelIndex> masked;
  masked.reserve(plan.masked_nonempty.size() + plan.sampled_empty.size());
  masked.insert(masked.end(), plan.masked_nonempty.begin(), plan.masked_nonempty.end());
  masked.insert(masked.end(), plan.sampled_empty.begin(), plan.sampled_empty.end());
  if (masked.empty()) return out;
  Var tok = numcore::repeat_rows(tape, tape.parameter(params.mask_token), masked.size());
  Var pos = positional_rows(tape, params, config, grid, masked);
  Var masked_feats = numcore::add(tape, tok, pos);
  out.features = numcore::concat_rows(tape, {encoded_visible.features, masked_feats});
  for (const auto& i : plan.masked_nonempty) {
    out.indices.push_back(i);
    out.kinds.push_back(TokenKind::masked_nonempty);
  }
  for (const auto& i : plan.sampled_empty) {
    out.indices.push_back(i);
    out.kinds.push_back(TokenKind::masked_empty);
  }
  return out;
}

template <typename T>
HeadOutputs<T> heads(Tape<T>& tape, ModelParams<T>& params, const ModelConfig&, Var decoded) {
  HeadOutputs<T> h;
  h.points = numcore::tanh(tape, apply_linear(tape, params.point_head, decoded));
  h.count = apply_linear(tape, params.count_head, decoded);
  h.occupancy = apply_linear(tape, params.occupancy_head, decoded);
  return h;
}

template <typename T>
SceneOutputs<T> forward_scene(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config,
                              const VoxelizedCloud& vc, const masking::MaskPlan& plan, const ForwardOptions& options) {
  std::vector<const Voxel*> visible;
  visible.reserve(plan.visible.size());
  for (const auto& i : plan.visible) {
    const Voxel* v = vc.find(i);
    if (!v) throw std::invalid_argument("forward_scene: visible index is not an occupied voxel");
    visible.push_back(v);
  }
  TokenSeq<T> tokens;
  tokens.indices = plan.visible;
  tokens.kinds.assign(plan.visible.size(), TokenKind::visible);
  if (visible.empty()) {
    tokens.features = tape.constant(Tensor<T>({0, config.d_model}));
  } else {
    Var emb = embed_voxels(tape, params, config, vc.grid, visible);
    tokens.features = numcore::add(tape, emb, positional_rows(tape, params, config, vc.grid, plan.visible));
  }
  SceneOutputs<T> out;
  out.encoded = encoder_forward(tape, params, config, std::move(tokens), options);
  auto dec_in = assemble_decoder_input(tape, params, config, vc.grid, out.encoded, plan);
  out.decoded = decoder_forward(tape, params, config, std::move(dec_in), options);
  out.heads = heads(tape, params, config, out.decoded.features);
  return out;
}

#define VOXMAE_INSTANTIATE_MODEL(T)                                                                                  \
  template struct ModelParams<T>;                                                                                    \
  template ModelParams<T> init_params<T>(const ModelConfig&, const GridConfig&, std::uint64_t);                      \
  template std::vector<T> positional_embedding<T>(const VoxelIndex&, const GridConfig&, std::size_t);                \
  template Var positional_rows<T>(Tape<T>&, ModelParams<T>&, const ModelConfig&, const GridConfig&,                  \
                                  std::span<const VoxelIndex>);                                                      \
  template Var embed_voxels<T>(Tape<T>&, ModelParams<T>&, const ModelConfig&, const GridConfig&,                     \
                               std::span<const Voxel* const>);                                                       \
  template Tensor<T> embed_voxel<T>(const Voxel&, ModelParams<T>&, const ModelConfig&, const GridConfig&);           \
  template Var transformer_block<T>(Tape<T>&, BlockParams<T>&, const ModelConfig&, Var, std::span<const VoxelIndex>, \
                                    bool, const ForwardOptions&);                                                    \
  template TokenSeq<T> encoder_forward<T>(Tape<T>&, ModelParams<T>&, const ModelConfig&, TokenSeq<T>,                \
                                          const ForwardOptions&);                                                    \
  template TokenSeq<T> decoder_forward<T>(Tape<T>&, ModelParams<T>&, const ModelConfig&, TokenSeq<T>,                \
                                          const ForwardOptions&);                                                    \
  template TokenSeq<T> assemble_decoder_input<T>(Tape<T>&, ModelParams<T>&, const ModelConfig&, const GridConfig&,   \
                                                 const TokenSeq<T>&, const masking::MaskPlan&);                      \
  template HeadOutputs<T> heads<T>(Tape<T>&, ModelParams<T>&, const ModelConfig&, Var);                              \
  template SceneOutputs<T> forward_scene<T>(Tape<T>&, ModelParams<T>&, const ModelConfig&, const VoxelizedCloud&,    \
                                            const masking::MaskPlan&, const ForwardOptions&);

VOXMAE_INSTANTIATE_MODEL(float)
VOXMAE_INSTANTIATE_MODEL(double)

template ModelParams<double> cast_params<double, float>(const ModelParams<float>&);
template ModelParams<float> cast_params<float, double>(const ModelParams<double>&);
template ModelParams<float> cast_params<float, float>(const ModelParams<float>&);

}  // namespace voxmae::model
