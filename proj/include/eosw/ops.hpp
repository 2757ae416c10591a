// Copyright 2026 The eosw Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// \file
/// Differentiable ops over Tensor. Every op registers its backward rule.
/// Matrices are row-major; dense products go through Eigen maps.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eosw/tensor.hpp"

namespace eosw {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using MMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CStrided = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using MStrided = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename T>
void require_row_vector(const Tensor<T>& x, const Tensor<T>& v, const char* op) {
  require_matrix(x, op);
  if (v.size() != x.cols()) {
    throw DimensionError(std::string(op) + ": vector of shape " + shape_str(v.shape()) +
                         " does not match columns of " + shape_str(x.shape()));
  }
}

}  // namespace detail

/// Matrix product. dL/da = g·bᵀ, dL/db = aᵀ·g.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(m * n);
  detail::MMap<T>(out.data(), m, n).noalias() =
      detail::CMap<T>(a.data().data(), m, k) * detail::CMap<T>(b.data().data(), k, n);
  return make_op_result<T>({m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<T>& self) {
    detail::CMap<T> g(self.grad.data(), m, n);
    const auto& pa = *self.parents[0];
    const auto& pb = *self.parents[1];
    if (auto ga = parent_grad(self, 0); !ga.empty()) {
      detail::MMap<T>(ga.data(), m, k).noalias() += g * detail::CMap<T>(pb.data.data(), k, n).transpose();
    }
    if (auto gb = parent_grad(self, 1); !gb.empty()) {
      detail::MMap<T>(gb.data(), k, n).noalias() += detail::CMap<T>(pa.data.data(), m, k).transpose() * g;
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto g = parent_grad(self, p); !g.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op_result<T>(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    const auto& ad = self.parents[0]->data;
    const auto& bd = self.parents[1]->data;
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bd[i];
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * ad[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * s;
  return make_op_result<T>(x.shape(), std::move(out), {x}, [s](detail::Node<T>& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * s;
    }
  });
}

/// x[m×n] + b[n], broadcast over rows.
template <typename T>
Tensor<T> add_rowwise(const Tensor<T>& x, const Tensor<T>& b) {
  detail::require_row_vector(x, b, "add_rowwise");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x.data()[r * n + c] + b.data()[c];
  return make_op_result<T>(x.shape(), std::move(out), {x, b}, [m, n](detail::Node<T>& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += self.grad[r * n + c];
    }
  });
}

/// x[m×n] ⊙ g[n], broadcast over rows.
template <typename T>
Tensor<T> mul_rowwise(const Tensor<T>& x, const Tensor<T>& gain) {
  detail::require_row_vector(x, gain, "mul_rowwise");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = x.data()[r * n + c] * gain.data()[c];
  return make_op_result<T>(x.shape(), std::move(out), {x, gain}, [m, n](detail::Node<T>& self) {
    const auto& xd = self.parents[0]->data;
    const auto& gd = self.parents[1]->data;
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += self.grad[r * n + c] * gd[c];
    }
    if (auto g = parent_grad(self, 1); !g.empty()) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[c] += self.grad[r * n + c] * xd[r * n + c];
    }
  });
}

/// tanh-approximated GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T kC = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T kA = T(0.044715);
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = T(0.5) * v * (T(1) + std::tanh(kC * (v + kA * v * v * v)));
  }
  return make_op_result<T>(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto g = parent_grad(self, 0);
    if (g.empty()) return;
    const auto& xd = self.parents[0]->data;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xd[i];
      const T th = std::tanh(kC * (v + kA * v * v * v));
      const T dv = T(0.5) * (T(1) + th) +
                   T(0.5) * v * (T(1) - th * th) * kC * (T(1) + T(3) * kA * v * v);
      g[i] += self.grad[i] * dv;
    }
  });
}

/// Row-wise normalization to zero mean and unit variance, without affine terms.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, T eps = T(1e-5)) {
  detail::require_matrix(x, "layernorm");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(x.size());
  auto inv_std = std::make_shared<std::vector<T>>(m);
  for (std::size_t r = 0; r < m; ++r) {
    const T* row = x.data().data() + r * n;
    T mean = 0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= T(n);
    T var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= T(n);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = (row[c] - mean) * is;
  }
  return make_op_result<T>(x.shape(), std::move(out), {x}, [m, n, inv_std](detail::Node<T>& self) {
    auto g = parent_grad(self, 0);
    if (g.empty()) return;
    for (std::size_t r = 0; r < m; ++r) {
      const T* y = self.data.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      T mean_dy = 0, mean_dy_y = 0;
      for (std::size_t c = 0; c < n; ++c) {
        mean_dy += dy[c];
        mean_dy_y += dy[c] * y[c];
      }
      mean_dy /= T(n);
      mean_dy_y /= T(n);
      const T is = (*inv_std)[r];
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += is * (dy[c] - mean_dy - y[c] * mean_dy_y);
    }
  });
}

/// Gathers rows of `table` [V×d] → [ids.size()×d].
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids) {
  detail::require_matrix(table, "embedding_lookup");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("embedding_lookup: id " + std::to_string(ids[i]) + " at position " +
                       std::to_string(i) + " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return make_op_result<T>({ids.size(), d}, std::move(out), {table},
                           [saved = std::move(saved), d](detail::Node<T>& self) {
                             auto g = parent_grad(self, 0);
                             if (g.empty()) return;
                             for (std::size_t i = 0; i < saved.size(); ++i) {
                               T* dst = g.data() + saved[i] * d;
                               const T* src = self.grad.data() + i * d;
                               for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
                             }
                           });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_op_result<T>(std::move(shape), std::move(out), {x}, [](detail::Node<T>& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::require_matrix(x, "transpose");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[c * m + r] = x.data()[r * n + c];
  return make_op_result<T>({n, m}, std::move(out), {x}, [m, n](detail::Node<T>& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) g[r * n + c] += self.grad[c * m + r];
    }
  });
}

namespace detail {

// Stable softmax of one row, writing into `out`.
template <typename T>
void softmax_row(const T* in, T* out, std::size_t n) {
  T mx = in[0];
  for (std::size_t c = 1; c < n; ++c) mx = std::max(mx, in[c]);
  T sum = 0;
  for (std::size_t c = 0; c < n; ++c) {
    out[c] = std::exp(in[c] - mx);
    sum += out[c];
  }
  const T inv = T(1) / sum;
  for (std::size_t c = 0; c < n; ++c) out[c] *= inv;
}

template <typename T>
void require_finite(std::span<const T> v, const char* op) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i])) throw NumericError(std::string(op) + ": NaN at flat index " + std::to_string(i));
  }
}

}  // namespace detail

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  detail::require_matrix(x, "softmax_rows");
  detail::require_finite(x.data(), "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(x.size());
  for (std::size_t r = 0; r < m; ++r) detail::softmax_row(x.data().data() + r * n, out.data() + r * n, n);
  return make_op_result<T>(x.shape(), std::move(out), {x}, [m, n](detail::Node<T>& self) {
    auto g = parent_grad(self, 0);
    if (g.empty()) return;
    for (std::size_t r = 0; r < m; ++r) {
      const T* y = self.data.data() + r * n;
      const T* dy = self.grad.data() + r * n;
      T dot = 0;
      for (std::size_t c = 0; c < n; ++c) dot += dy[c] * y[c];
      for (std::size_t c = 0; c < n; ++c) g[r * n + c] += y[c] * (dy[c] - dot);
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = 0;
  for (T v : x.data()) s += v;
  return make_op_result<T>({1}, {s}, {x}, [](detail::Node<T>& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (auto& v : g) v += self.grad[0];
    }
  });
}

/// Inverted dropout: kept activations are scaled by 1/(1-rate).
template <typename T, typename Rng>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) throw RangeError("dropout rate must be in [0, 1)");
  if (rate == 0.0) return x;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto mask = std::make_shared<std::vector<T>>(x.size());
  const T keep_scale = T(1.0 / (1.0 - rate));
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = u(rng) < rate ? T(0) : keep_scale;
    out[i] = x.data()[i] * (*mask)[i];
  }
  return make_op_result<T>(x.shape(), std::move(out), {x}, [mask](detail::Node<T>& self) {
    if (auto g = parent_grad(self, 0); !g.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (*mask)[i];
    }
  });
}

/// A contiguous run of rows belonging to one sequence in a packed batch.
struct Segment {
  std::size_t start = 0;
  std::size_t length = 0;
};

/// Multi-head causal self-attention over a packed batch.
///
/// `qkv` is [R × 3d] with queries, keys and values side by side; each segment
/// attends only within itself and only to earlier-or-equal positions. Output
/// is [R × d] with heads concatenated along columns.
template <typename T>
Tensor<T> causal_attention(const Tensor<T>& qkv, std::span<const Segment> segments, std::size_t n_heads) {
  detail::require_matrix(qkv, "causal_attention");
  if (qkv.cols() % 3 != 0 || n_heads == 0 || (qkv.cols() / 3) % n_heads != 0) {
    throw DimensionError("causal_attention: width " + std::to_string(qkv.cols()) +
                         " is not 3 x heads x head_dim for " + std::to_string(n_heads) + " heads");
  }
  const std::size_t rows = qkv.rows(), d = qkv.cols() / 3, dh = d / n_heads;
  const T scale_qk = T(1) / std::sqrt(T(dh));
  std::size_t covered = 0;
  for (const auto& s : segments) {
    if (s.start != covered) throw DimensionError("causal_attention: segments must tile rows in order");
    covered += s.length;
  }
  if (covered != rows) throw DimensionError("causal_attention: segments cover " + std::to_string(covered) +
                                            " of " + std::to_string(rows) + " rows");

  std::vector<Segment> segs(segments.begin(), segments.end());
  // Attention probabilities per (segment, head), kept for the backward pass.
  auto probs = std::make_shared<std::vector<detail::RowMat<T>>>();
  probs->reserve(segs.size() * n_heads);
  std::vector<T> out(rows * d, T(0));
  const T* base = qkv.data().data();
  for (const auto& s : segs) {
    const auto len = static_cast<Eigen::Index>(s.length);
    for (std::size_t h = 0; h < n_heads; ++h) {
      const T* row0 = base + s.start * 3 * d;
      detail::CStrided<T> q(row0 + h * dh, len, dh, Eigen::OuterStride<>(3 * d));
      detail::CStrided<T> k(row0 + d + h * dh, len, dh, Eigen::OuterStride<>(3 * d));
      detail::CStrided<T> v(row0 + 2 * d + h * dh, len, dh, Eigen::OuterStride<>(3 * d));
      detail::RowMat<T> p = (q * k.transpose()) * scale_qk;
      for (Eigen::Index i = 0; i < len; ++i) {
        detail::softmax_row(p.data() + i * len, p.data() + i * len, static_cast<std::size_t>(i + 1));
        for (Eigen::Index j = i + 1; j < len; ++j) p(i, j) = T(0);
      }
      detail::MStrided<T> o(out.data() + s.start * d + h * dh, len, dh, Eigen::OuterStride<>(d));
      o.noalias() = p * v;
      probs->push_back(std::move(p));
    }
  }
  return make_op_result<T>(
      {rows, d}, std::move(out), {qkv},
      [segs = std::move(segs), probs, n_heads, d, dh, scale_qk](detail::Node<T>& self) {
        auto gq = parent_grad(self, 0);
        if (gq.empty()) return;
        const T* base = self.parents[0]->data.data();
        std::size_t idx = 0;
        for (const auto& s : segs) {
          const auto len = static_cast<Eigen::Index>(s.length);
          for (std::size_t h = 0; h < n_heads; ++h, ++idx) {
            const auto& p = (*probs)[idx];
            const std::size_t off = s.start * 3 * d;
            detail::CStrided<T> q(base + off + h * dh, len, dh, Eigen::OuterStride<>(3 * d));
            detail::CStrided<T> k(base + off + d + h * dh, len, dh, Eigen::OuterStride<>(3 * d));
            detail::CStrided<T> v(base + off + 2 * d + h * dh, len, dh, Eigen::OuterStride<>(3 * d));
            detail::CStrided<T> go(self.grad.data() + s.start * d + h * dh, len, dh, Eigen::OuterStride<>(d));
            detail::MStrided<T> dq(gq.data() + off + h * dh, len, dh, Eigen::OuterStride<>(3 * d));
            detail::MStrided<T> dk(gq.data() + off + d + h * dh, len, dh, Eigen::OuterStride<>(3 * d));
            detail::MStrided<T> dv(gq.data() + off + 2 * d + h * dh, len, dh, Eigen::OuterStride<>(3 * d));

            dv.noalias() += p.transpose() * go;
            detail::RowMat<T> ds = go * v.transpose();
            for (Eigen::Index i = 0; i < len; ++i) {
              T dot = 0;
              for (Eigen::Index j = 0; j <= i; ++j) dot += ds(i, j) * p(i, j);
              for (Eigen::Index j = 0; j <= i; ++j) ds(i, j) = p(i, j) * (ds(i, j) - dot) * scale_qk;
              for (Eigen::Index j = i + 1; j < len; ++j) ds(i, j) = T(0);
            }
            dq.noalias() += ds * k;
            dk.noalias() += ds.transpose() * q;
          }
        }
      });
}

}  // namespace eosw
