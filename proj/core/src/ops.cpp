#include "voxmae/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace voxmae::numcore {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Fully masked rows are a caller error: every attention window holds at
// least one real token.
template <typename T>
void softmax_row(const T* in, const std::uint8_t* masked, T* out, std::size_t n) {
  T peak = -std::numeric_limits<T>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < n; ++j) {
    if (masked && masked[j]) continue;
    any = true;
    peak = std::max(peak, in[j]);
  }
  if (!any) throw std::invalid_argument("softmax_masked: row has no unmasked entry");
  T total = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (masked && masked[j]) {
      out[j] = 0;
      continue;
    }
    out[j] = std::exp(in[j] - peak);
    total += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= total;
}

template <typename T>
Var next_id(const Tape<T>& t) {
  return Var{t.size()};
}

// c[m,n] += a[m,k] * b[k,n], row-major, fixed summation order over k.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* __restrict ci = c + i * n;
    const T* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = ai[p];
      const T* __restrict bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.rank() == 2 && b.rank() == 2 && a.shape()[1] == b.shape()[0],
          "matmul: shape mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> c({m, n});
  gemm_acc(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

template <typename T>
Tensor<T> softmax_masked(const Tensor<T>& scores, std::span<const std::uint8_t> masked) {
  require(masked.empty() || masked.size() == scores.size(),
          "softmax_masked: mask has " + std::to_string(masked.size()) + " entries for scores " +
              shape_str(scores.shape()));
  Tensor<T> out = Tensor<T>::zeros_like(scores);
  const std::size_t n = scores.shape().empty() ? 1 : scores.shape().back();
  if (n == 0) return out;
  const std::size_t rows = scores.size() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    softmax_row(scores.data() + r * n, masked.empty() ? nullptr : masked.data() + r * n, out.data() + r * n, n);
  }
  return out;
}

template <typename T>
T gelu_value(T x) {
  const T c = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

// ---- tape operations -------------------------------------------------------

template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  Tensor<T> out = matmul(t.value(a), t.value(b));
  const Var self = next_id(t);
  return t.record(std::move(out), {a, b}, [a, b, self](Tape<T>& tp) {
    const Tensor<T>& av = tp.value(a);
    const Tensor<T>& bv = tp.value(b);
    const Tensor<T>& g = tp.grad(self);
    const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
    if (tp.requires_grad(a)) {
      Tensor<T>& ga = tp.grad(a);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += g(i, j) * bv(p, j);
          ga(i, p) += acc;
        }
    }
    if (tp.requires_grad(b)) {
      Tensor<T>& gb = tp.grad(b);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T x = av(i, p);
          const T* gi = g.row(i);
          T* gbp = gb.row(p);
          for (std::size_t j = 0; j < n; ++j) gbp[j] += x * gi[j];
        }
    }
  });
}

template <typename T>
Var linear(Tape<T>& t, Var x, Var w, Var bias) {
  const Tensor<T>& xv = t.value(x);
  const Tensor<T>& wv = t.value(w);
  const Tensor<T>& bv = t.value(bias);
  require(xv.rank() == 2 && wv.rank() == 2 && xv.shape()[1] == wv.shape()[0] && bv.size() == wv.shape()[1],
          "linear: shape mismatch " + shape_str(xv.shape()) + " x " + shape_str(wv.shape()) + " + " +
              shape_str(bv.shape()));
  Tensor<T> out = matmul(xv, wv);
  const std::size_t n = wv.shape()[1];
  for (std::size_t i = 0; i < out.rows(); ++i) {
    T* oi = out.row(i);
    for (std::size_t j = 0; j < n; ++j) oi[j] += bv[j];
  }
  const Var self = next_id(t);
  return t.record(std::move(out), {x, w, bias}, [x, w, bias, self](Tape<T>& tp) {
    const Tensor<T>& xv2 = tp.value(x);
    const Tensor<T>& wv2 = tp.value(w);
    const Tensor<T>& g = tp.grad(self);
    const std::size_t m = xv2.shape()[0], k = xv2.shape()[1], n2 = wv2.shape()[1];
    if (tp.requires_grad(x)) {
      // gx += g * w^T, with w^T materialized so the inner loop is contiguous.
      std::vector<T> wt(n2 * k);
      const T* wd = wv2.data();
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n2; ++j) wt[j * k + p] = wd[p * n2 + j];
      gemm_acc(g.data(), wt.data(), tp.grad(x).data(), m, n2, k);
    }
    if (tp.requires_grad(w)) {
      T* gw = tp.grad(w).data();
      const T* gd = g.data();
      const T* xd = xv2.data();
      for (std::size_t i = 0; i < m; ++i) {
        const T* gi = gd + i * n2;
        const T* xi = xd + i * k;
        for (std::size_t p = 0; p < k; ++p) {
          const T xp = xi[p];
          T* gwp = gw + p * n2;
          for (std::size_t j = 0; j < n2; ++j) gwp[j] += xp * gi[j];
        }
      }
    }
    if (tp.requires_grad(bias)) {
      Tensor<T>& gb = tp.grad(bias);
      for (std::size_t i = 0; i < m; ++i) {
        const T* gi = g.row(i);
        for (std::size_t j = 0; j < n2; ++j) gb[j] += gi[j];
      }
    }
  });
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  require(t.shape(a) == t.shape(b), "add: shape mismatch " + shape_str(t.shape(a)) + " vs " + shape_str(t.shape(b)));
  Tensor<T> out = t.value(a);
  out += t.value(b);
  const Var self = next_id(t);
  return t.record(std::move(out), {a, b}, [a, b, self](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(self);
    if (tp.requires_grad(a)) tp.grad(a) += g;
    if (tp.requires_grad(b)) tp.grad(b) += g;
  });
}

template <typename T>
Var scale(Tape<T>& t, Var a, T factor) {
  Tensor<T> out = t.value(a);
  for (auto& v : out.values()) v *= factor;
  const Var self = next_id(t);
  return t.record(std::move(out), {a}, [a, self, factor](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& ga = tp.grad(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
  });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
  Tensor<T> out = t.value(x);
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  const Var self = next_id(t);
  return t.record(std::move(out), {x}, [x, self](Tape<T>& tp) {
    const Tensor<T>& xv = tp.value(x);
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > T(0)) gx[i] += g[i];
  });
}

template <typename T>
Var gelu(Tape<T>& t, Var x) {
  Tensor<T> out = t.value(x);
  for (auto& v : out.values()) v = gelu_value(v);
  const Var self = next_id(t);
  return t.record(std::move(out), {x}, [x, self](Tape<T>& tp) {
    const T c = static_cast<T>(0.7978845608028654);
    const Tensor<T>& xv = tp.value(x);
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T z = xv[i];
      const T th = std::tanh(c * (z + T(0.044715) * z * z * z));
      const T d = T(0.5) * (T(1) + th) + T(0.5) * z * (T(1) - th * th) * c * (T(1) + T(3 * 0.044715) * z * z);
      gx[i] += g[i] * d;
    }
  });
}

template <typename T>
Var tanh(Tape<T>& t, Var x) {
  Tensor<T> out = t.value(x);
  for (auto& v : out.values()) v = std::tanh(v);
  const Var self = next_id(t);
  return t.record(std::move(out), {x}, [self, x](Tape<T>& tp) {
    const Tensor<T>& y = tp.value(self);
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (T(1) - y[i] * y[i]);
  });
}

template <typename T>
Var layer_norm(Tape<T>& t, Var x, Var gain, Var bias, T eps) {
  const Tensor<T>& xv = t.value(x);
  const std::size_t c = xv.shape().empty() ? 1 : xv.shape().back();
  require(t.value(gain).size() == c && t.value(bias).size() == c,
          "layer_norm: gain/bias " + shape_str(t.shape(gain)) + "/" + shape_str(t.shape(bias)) +
              " do not match last axis of " + shape_str(xv.shape()));
  const std::size_t rows = c ? xv.size() / c : 0;
  Tensor<T> out = Tensor<T>::zeros_like(xv);
  std::vector<T> xhat(xv.size());
  std::vector<T> inv_std(rows);
  const Tensor<T>& gv = t.value(gain);
  const Tensor<T>& bv = t.value(bias);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * c;
    T mean = 0;
    for (std::size_t j = 0; j < c; ++j) mean += xr[j];
    mean /= static_cast<T>(c);
    T var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<T>(c);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const T h = (xr[j] - mean) * is;
      xhat[r * c + j] = h;
      out[r * c + j] = h * gv[j] + bv[j];
    }
  }
  const Var self = next_id(t);
  return t.record(std::move(out), {x, gain, bias},
                  [x, gain, bias, self, c, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tp) {
                    const Tensor<T>& g = tp.grad(self);
                    const Tensor<T>& gv2 = tp.value(gain);
                    if (tp.requires_grad(gain) || tp.requires_grad(bias)) {
                      Tensor<T>& gg = tp.grad(gain);
                      Tensor<T>& gb = tp.grad(bias);
                      for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t j = 0; j < c; ++j) {
                          gg[j] += g[r * c + j] * xhat[r * c + j];
                          gb[j] += g[r * c + j];
                        }
                    }
                    if (!tp.requires_grad(x)) return;
                    Tensor<T>& gx = tp.grad(x);
                    std::vector<T> dh(c);
                    for (std::size_t r = 0; r < rows; ++r) {
                      T mean_dh = 0, mean_dh_h = 0;
                      for (std::size_t j = 0; j < c; ++j) {
                        dh[j] = g[r * c + j] * gv2[j];
                        mean_dh += dh[j];
                        mean_dh_h += dh[j] * xhat[r * c + j];
                      }
                      mean_dh /= static_cast<T>(c);
                      mean_dh_h /= static_cast<T>(c);
                      for (std::size_t j = 0; j < c; ++j)
                        gx[r * c + j] += inv_std[r] * (dh[j] - mean_dh - xhat[r * c + j] * mean_dh_h);
                    }
                  });
}

template <typename T>
Var softmax_masked(Tape<T>& t, Var scores, std::vector<std::uint8_t> masked) {
  Tensor<T> out = softmax_masked(t.value(scores), std::span<const std::uint8_t>(masked));
  const Var self = next_id(t);
  return t.record(std::move(out), {scores}, [scores, self](Tape<T>& tp) {
    const Tensor<T>& y = tp.value(self);
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gs = tp.grad(scores);
    const std::size_t n = y.shape().empty() ? 1 : y.shape().back();
    if (n == 0) return;
    for (std::size_t r = 0; r < y.size() / n; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += y[r * n + j] * g[r * n + j];
      for (std::size_t j = 0; j < n; ++j) gs[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

template <typename T>
Var gather_rows(Tape<T>& t, Var x, std::vector<std::size_t> rows) {
  const Tensor<T>& xv = t.value(x);
  const std::size_t c = xv.cols();
  Shape shape = xv.shape();
  if (shape.empty()) shape = {1};
  shape[0] = rows.size();
  Tensor<T> out(shape);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < xv.rows(), "gather_rows: row " + std::to_string(rows[i]) + " out of " + shape_str(xv.shape()));
    std::copy_n(xv.row(rows[i]), c, out.row(i));
  }
  const Var self = next_id(t);
  return t.record(std::move(out), {x}, [x, self, c, rows = std::move(rows)](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad(x);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const T* gi = g.row(i);
      T* dst = gx.row(rows[i]);
      for (std::size_t j = 0; j < c; ++j) dst[j] += gi[j];
    }
  });
}

template <typename T>
Var concat_rows(Tape<T>& t, const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  const std::size_t c = t.value(parts[0]).cols();
  std::size_t total = 0;
  for (auto p : parts) {
    require(t.value(p).cols() == c, "concat_rows: column mismatch " + shape_str(t.shape(parts[0])) + " vs " +
                                        shape_str(t.shape(p)));
    total += t.value(p).rows();
  }
  Tensor<T> out({total, c});
  std::size_t offset = 0;
  for (auto p : parts) {
    const Tensor<T>& pv = t.value(p);
    std::copy(pv.storage().begin(), pv.storage().end(), out.data() + offset * c);
    offset += pv.rows();
  }
  const Var self = next_id(t);
  return t.record(std::move(out), parts, [parts, self, c](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(self);
    std::size_t off = 0;
    for (auto p : parts) {
      const std::size_t r = tp.value(p).rows();
      if (tp.requires_grad(p)) {
        Tensor<T>& gp = tp.grad(p);
        for (std::size_t k = 0; k < r * c; ++k) gp[k] += g[off * c + k];
      }
      off += r;
    }
  });
}

template <typename T>
Var repeat_rows(Tape<T>& t, Var x, std::size_t n) {
  const Tensor<T>& xv = t.value(x);
  require(xv.rows() == 1, "repeat_rows: expected a single row, got " + shape_str(xv.shape()));
  const std::size_t c = xv.cols();
  Tensor<T> out({n, c});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(xv.data(), c, out.row(i));
  const Var self = next_id(t);
  return t.record(std::move(out), {x}, [x, self, n, c](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad(x);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[j] += g(i, j);
  });
}

template <typename T>
Var segment_max(Tape<T>& t, Var x, std::vector<std::size_t> segment, std::size_t segment_count) {
  const Tensor<T>& xv = t.value(x);
  require(segment.size() == xv.rows(), "segment_max: " + std::to_string(segment.size()) + " segment ids for " +
                                           shape_str(xv.shape()));
  const std::size_t c = xv.cols();
  Tensor<T> out({segment_count, c});
  std::vector<std::size_t> arg(segment_count * c, static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < segment.size(); ++i) {
    const std::size_t s = segment[i];
    require(s < segment_count, "segment_max: segment id out of range");
    const T* xi = xv.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      std::size_t& a = arg[s * c + j];
      if (a == static_cast<std::size_t>(-1) || xi[j] > out(s, j)) {
        a = i;
        out(s, j) = xi[j];
      }
    }
  }
  for (auto a : arg) require(a != static_cast<std::size_t>(-1), "segment_max: empty segment");
  const Var self = next_id(t);
  return t.record(std::move(out), {x}, [x, self, c, arg = std::move(arg)](Tape<T>& tp) {
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gx = tp.grad(x);
    for (std::size_t k = 0; k < arg.size(); ++k) gx(arg[k], k % c) += g[k];
  });
}

template <typename T>
Var segment_mean(Tape<T>& t, Var x, std::vector<std::size_t> segment, std::size_t segment_count) {
  const Tensor<T>& xv = t.value(x);
  require(segment.size() == xv.rows(), "segment_mean: segment ids do not match rows");
  const std::size_t c = xv.cols();
  std::vector<std::size_t> counts(segment_count, 0);
  for (auto s : segment) {
    require(s < segment_count, "segment_mean: segment id out of range");
    ++counts[s];
  }
  for (auto n : counts) require(n > 0, "segment_mean: empty segment");
  std::vector<std::vector<std::size_t>> rows(segment_count);
  for (std::size_t i = 0; i < segment.size(); ++i) rows[segment[i]].push_back(i);
  // Sorted summation keeps the result independent of row order.
  Tensor<T> out({segment_count, c});
  std::vector<T> col;
  for (std::size_t s = 0; s < segment_count; ++s)
    for (std::size_t j = 0; j < c; ++j) {
      col.clear();
      for (auto i : rows[s]) col.push_back(xv(i, j));
      std::sort(col.begin(), col.end());
      T acc = 0;
      for (T v : col) acc += v;
      out(s, j) = acc / static_cast<T>(counts[s]);
    }
  const Var self = next_id(t);
  return t.record(std::move(out), {x},
                  [x, self, c, segment = std::move(segment), counts = std::move(counts)](Tape<T>& tp) {
                    const Tensor<T>& g = tp.grad(self);
                    Tensor<T>& gx = tp.grad(x);
                    for (std::size_t i = 0; i < segment.size(); ++i)
                      for (std::size_t j = 0; j < c; ++j)
                        gx(i, j) += g(segment[i], j) / static_cast<T>(counts[segment[i]]);
                  });
}

template <typename T>
Var sum(Tape<T>& t, Var x) {
  T total = 0;
  for (auto v : t.value(x).values()) total += v;
  const Var self = next_id(t);
  return t.record(Tensor<T>({1}, {total}), {x}, [x, self](Tape<T>& tp) {
    const T g = tp.grad(self)[0];
    for (auto& v : tp.grad(x).values()) v += g;
  });
}

template <typename T>
Var window_attention(Tape<T>& t, Var qkv, const std::vector<std::vector<std::int64_t>>& groups, std::size_t heads) {
  const Tensor<T>& in = t.value(qkv);
  require(in.rank() == 2 && in.shape()[1] % 3 == 0, "window_attention: qkv must be [N, 3d], got " + shape_str(in.shape()));
  const std::size_t n = in.shape()[0];
  const std::size_t d = in.shape()[1] / 3;
  require(heads > 0 && d % heads == 0, "window_attention: d=" + std::to_string(d) + " not divisible by heads=" +
                                           std::to_string(heads));
  const std::size_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));

  Tensor<T> out({n, d});
  // probs layout per group: [heads][real queries][slots]
  std::vector<std::vector<T>> probs(groups.size());
  std::vector<T> scores;
  std::vector<std::uint8_t> pad;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& slots = groups[gi];
    const std::size_t len = slots.size();
    pad.assign(len, 0);
    std::vector<std::size_t> real;
    for (std::size_t s = 0; s < len; ++s) {
      if (slots[s] < 0) {
        pad[s] = 1;
      } else {
        require(static_cast<std::size_t>(slots[s]) < n, "window_attention: slot references missing token");
        real.push_back(s);
      }
    }
    if (real.empty()) continue;
    auto& p = probs[gi];
    p.assign(heads * real.size() * len, T(0));
    scores.assign(len, T(0));
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t qi = 0; qi < real.size(); ++qi) {
        const T* q = in.row(static_cast<std::size_t>(slots[real[qi]])) + h * dh;
        for (std::size_t s = 0; s < len; ++s) {
          if (pad[s]) {
            scores[s] = 0;
            continue;
          }
          const T* k = in.row(static_cast<std::size_t>(slots[s])) + d + h * dh;
          T acc = 0;
          for (std::size_t c = 0; c < dh; ++c) acc += q[c] * k[c];
          scores[s] = acc * inv_sqrt;
        }
        T* prow = p.data() + (h * real.size() + qi) * len;
        softmax_row(scores.data(), pad.data(), prow, len);
        T* o = out.row(static_cast<std::size_t>(slots[real[qi]])) + h * dh;
        for (std::size_t s = 0; s < len; ++s) {
          if (pad[s]) continue;
          const T w = prow[s];
          const T* v = in.row(static_cast<std::size_t>(slots[s])) + 2 * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) o[c] += w * v[c];
        }
      }
    }
  }

  const Var self = next_id(t);
  return t.record(std::move(out), {qkv}, [qkv, self, groups, heads, d, dh, inv_sqrt, probs = std::move(probs)](Tape<T>& tp) {
    const Tensor<T>& inv = tp.value(qkv);
    const Tensor<T>& g = tp.grad(self);
    Tensor<T>& gin = tp.grad(qkv);
    std::vector<T> dp;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const auto& slots = groups[gi];
      const std::size_t len = slots.size();
      std::vector<std::size_t> real;
      for (std::size_t s = 0; s < len; ++s)
        if (slots[s] >= 0) real.push_back(s);
      if (real.empty()) continue;
      dp.assign(len, T(0));
      for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t qi = 0; qi < real.size(); ++qi) {
          const std::size_t qrow = static_cast<std::size_t>(slots[real[qi]]);
          const T* prow = probs[gi].data() + (h * real.size() + qi) * len;
          const T* go = g.row(qrow) + h * dh;
          T dot = 0;
          for (std::size_t s = 0; s < len; ++s) {
            if (slots[s] < 0) continue;
            const std::size_t kr = static_cast<std::size_t>(slots[s]);
            const T* v = inv.row(kr) + 2 * d + h * dh;
            T acc = 0;
            for (std::size_t c = 0; c < dh; ++c) acc += go[c] * v[c];
            dp[s] = acc;
            dot += prow[s] * acc;
            T* gv = gin.row(kr) + 2 * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) gv[c] += prow[s] * go[c];
          }
          const T* q = inv.row(qrow) + h * dh;
          T* gq = gin.row(qrow) + h * dh;
          for (std::size_t s = 0; s < len; ++s) {
            if (slots[s] < 0) continue;
            const std::size_t kr = static_cast<std::size_t>(slots[s]);
            const T ds = prow[s] * (dp[s] - dot) * inv_sqrt;
            const T* k = inv.row(kr) + d + h * dh;
            T* gk = gin.row(kr) + d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) {
              gq[c] += ds * k[c];
              gk[c] += ds * q[c];
            }
          }
        }
      }
    }
  });
}

#define VOXMAE_INSTANTIATE_OPS(T)                                                                           \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> softmax_masked<T>(const Tensor<T>&, std::span<const std::uint8_t>);                    \
  template T gelu_value<T>(T);                                                                              \
  template Var matmul<T>(Tape<T>&, Var, Var);                                                               \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                                          \
  template Var add<T>(Tape<T>&, Var, Var);                                                                  \
  template Var scale<T>(Tape<T>&, Var, T);                                                                  \
  template Var relu<T>(Tape<T>&, Var);                                                                      \
  template Var gelu<T>(Tape<T>&, Var);                                                                      \
  template Var tanh<T>(Tape<T>&, Var);                                                                      \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                                   \
  template Var softmax_masked<T>(Tape<T>&, Var, std::vector<std::uint8_t>);                                 \
  template Var gather_rows<T>(Tape<T>&, Var, std::vector<std::size_t>);                                     \
  template Var concat_rows<T>(Tape<T>&, const std::vector<Var>&);                                           \
  template Var repeat_rows<T>(Tape<T>&, Var, std::size_t);                                                  \
  template Var segment_max<T>(Tape<T>&, Var, std::vector<std::size_t>, std::size_t);                        \
  template Var segment_mean<T>(Tape<T>&, Var, std::vector<std::size_t>, std::size_t);                       \
  template Var sum<T>(Tape<T>&, Var);                                                                       \
  template Var window_attention<T>(Tape<T>&, Var, const std::vector<std::vector<std::int64_t>>&, std::size_t);

VOXMAE_INSTANTIATE_OPS(float)
VOXMAE_INSTANTIATE_OPS(double)

}  // namespace voxmae::numcore
