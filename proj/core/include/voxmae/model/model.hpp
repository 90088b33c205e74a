#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voxmae/masking.hpp"
#include "voxmae/model/windows.hpp"
#include "voxmae/numcore/ops.hpp"
#include "voxmae/numcore/tape.hpp"
#include "voxmae/voxelizer.hpp"

namespace voxmae::model {

using numcore::Parameter;
using numcore::Tape;
using numcore::Tensor;
using numcore::Var;
using voxelizer::GridConfig;
using voxelizer::Voxel;
using voxelizer::VoxelizedCloud;

enum class Pooling { max, mean };
enum class PositionalEncoding { sinusoidal, learned };

struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t n_enc_layers = 8;
  std::size_t n_dec_layers = 2;
  std::size_t n_heads = 8;
  std::size_t ffn_hidden = 256;
  std::size_t vfe_hidden = 64;
  std::size_t n_points = 10;
  WindowExtent window{16, 16};
  PaddingLevels levels;
  bool use_intensity = false;
  Pooling pooling = Pooling::max;
  PositionalEncoding positional = PositionalEncoding::sinusoidal;
  double ln_eps = 1e-5;

  std::size_t vfe_input_dim() const { return use_intensity ? 7 : 6; }
  void validate() const;
};

enum class TokenKind : std::uint8_t { visible, masked_nonempty, masked_empty };

template <typename T>
struct LinearParams {
  Parameter<T> weight;  // [in, out]
  Parameter<T> bias;    // [out]
};

template <typename T>
struct NormParams {
  Parameter<T> gain;
  Parameter<T> bias;
};

template <typename T>
struct BlockParams {
  NormParams<T> norm1;
  LinearParams<T> qkv;
  LinearParams<T> proj;
  NormParams<T> norm2;
  LinearParams<T> ffn1;
  LinearParams<T> ffn2;
};

template <typename T>
struct ModelParams {
  LinearParams<T> vfe1;
  LinearParams<T> vfe2;
  std::vector<BlockParams<T>> encoder;
  std::vector<BlockParams<T>> decoder;
  Parameter<T> mask_token;  // [1, d], shared by every masked position
  Parameter<T> pos_table;   // [cells_x * cells_y, d]; empty unless learned
  LinearParams<T> point_head;
  LinearParams<T> count_head;
  LinearParams<T> occupancy_head;

  // Stable order; names are unique.
  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
};

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, const GridConfig& grid, std::uint64_t seed);

template <typename U, typename T>
ModelParams<U> cast_params(const ModelParams<T>& params);

template <typename T>
struct TokenSeq {
  Var features;  // [N, d]
  std::vector<voxelizer::VoxelIndex> indices;
  std::vector<TokenKind> kinds;

  std::size_t size() const { return indices.size(); }
};

struct ForwardOptions {
  bool train = true;            // selects padding levels and token dropping
  std::uint64_t drop_seed = 0;  // seeds window drop decisions
};

// Fixed sinusoidal encoding of (ix, iy): d/4 geometric frequencies per
// axis, each contributing a (sin, cos) pair.
template <typename T>
std::vector<T> positional_embedding(const voxelizer::VoxelIndex& index, const GridConfig& grid, std::size_t d);

// [N, d] positional rows for the given indices; a constant for the
// sinusoidal encoding, a gather from pos_table for the learned one.
template <typename T>
Var positional_rows(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config, const GridConfig& grid,
                    std::span<const voxelizer::VoxelIndex> indices);

// Per-point decoration (offset from point mean, offset from voxel center,
// optional intensity), shared two-layer MLP with ReLU, then pooling over
// the points of each voxel. Returns [V, d].
template <typename T>
Var embed_voxels(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config, const GridConfig& grid,
                 std::span<const Voxel* const> voxels);

template <typename T>
Tensor<T> embed_voxel(const Voxel& voxel, ModelParams<T>& params, const ModelConfig& config, const GridConfig& grid);

// Pre-norm block: windowed multi-head self-attention and a GELU
// feed-forward, each with a residual connection.
template <typename T>
Var transformer_block(Tape<T>& tape, BlockParams<T>& block, const ModelConfig& config, Var x,
                      std::span<const voxelizer::VoxelIndex> indices, bool shifted, const ForwardOptions& options);

// Layer i uses shifted windows iff i is odd.
template <typename T>
TokenSeq<T> encoder_forward(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config, TokenSeq<T> tokens,
                            const ForwardOptions& options);

// encoded visible ++ (mask token + position) for masked voxels ++ the same
// for sampled empty cells.
template <typename T>
TokenSeq<T> assemble_decoder_input(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config,
                                   const GridConfig& grid, const TokenSeq<T>& encoded_visible,
                                   const masking::MaskPlan& plan);

template <typename T>
TokenSeq<T> decoder_forward(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config, TokenSeq<T> tokens,
                            const ForwardOptions& options);

template <typename T>
struct HeadOutputs {
  Var points;     // [N, 3n], tanh-squashed voxel-local offsets in [-1, 1]
  Var count;      // [N, 1]
  Var occupancy;  // [N, 1] logits
};

template <typename T>
HeadOutputs<T> heads(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config, Var decoded);

template <typename T>
struct SceneOutputs {
  TokenSeq<T> encoded;
  TokenSeq<T> decoded;
  HeadOutputs<T> heads;
};

// Embed visible voxels, encode, assemble decoder input, decode, predict.
template <typename T>
SceneOutputs<T> forward_scene(Tape<T>& tape, ModelParams<T>& params, const ModelConfig& config,
                              const VoxelizedCloud& vc, const masking::MaskPlan& plan, const ForwardOptions& options);

}  // namespace voxmae::model
