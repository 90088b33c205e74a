#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "voxmae/numcore/tape.hpp"
#include "voxmae/numcore/tensor.hpp"

namespace voxmae::numcore {

// ---- plain kernels ---------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Row-wise softmax over the last axis. `masked[i] != 0` excludes entry i;
// excluded entries come out exactly 0. A row with no surviving entry is
// rejected.
template <typename T>
Tensor<T> softmax_masked(const Tensor<T>& scores, std::span<const std::uint8_t> masked);

template <typename T>
T gelu_value(T x);

// ---- differentiable operations --------------------------------------------

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b);

// x[N,in] * w[in,out] + bias[out]
template <typename T>
Var linear(Tape<T>& t, Var x, Var w, Var bias);

template <typename T>
Var add(Tape<T>& t, Var a, Var b);

template <typename T>
Var scale(Tape<T>& t, Var a, T factor);

template <typename T>
Var relu(Tape<T>& t, Var x);

// tanh approximation
template <typename T>
Var gelu(Tape<T>& t, Var x);

template <typename T>
Var tanh(Tape<T>& t, Var x);

// Normalizes each row over the last axis, then applies gain and bias.
template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gain, Var bias, T eps);

template <typename T>
Var softmax_masked(Tape<T>& t, Var scores, std::vector<std::uint8_t> masked);

template <typename T>
Var gather_rows(Tape<T>& t, Var x, std::vector<std::size_t> rows);

template <typename T>
Var concat_rows(Tape<T>& t, const std::vector<Var>& parts);

// x[1,C] repeated into [n,C].
template <typename T>
Var repeat_rows(Tape<T>& t, Var x, std::size_t n);

// Pools rows of x[N,C] into [segment_count,C]; segment[i] names the output
// row of input row i. Every segment must be non-empty. Ties in the max go
// to the lowest input row.
template <typename T>
Var segment_max(Tape<T>& t, Var x, std::vector<std::size_t> segment, std::size_t segment_count);

template <typename T>
Var segment_mean(Tape<T>& t, Var x, std::vector<std::size_t> segment, std::size_t segment_count);

template <typename T>
Var sum(Tape<T>& t, Var x);

// Multi-head self-attention restricted to groups of tokens. qkv holds
// [N, 3*d] projections laid out as (q | k | v). Each group lists token
// rows, with -1 marking a padding slot; padding never receives attention
// weight. Tokens that appear in no group get a zero output row.
template <typename T>
Var window_attention(Tape<T>& t, Var qkv, const std::vector<std::vector<std::int64_t>>& groups,
                     std::size_t heads);

}  // namespace voxmae::numcore
