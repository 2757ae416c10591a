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
/// EOS-weighted, rescaled cross-entropy.
///
/// For a target sequence of N counted positions the loss is
///
///     L = -(R / N) * sum_n w(y_n) * log softmax(x_n)[y_n]
///     w(y) = W if y == EOS else 1
///     R = N / (N + W - 1)
///
/// so each position carries the coefficient R * w(y_n) / N. With exactly one
/// EOS the coefficients sum to 1, making the loss a convex combination of the
/// per-token losses in which EOS counts W times. W = 1 gives the plain mean.

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "eosw/log.hpp"
#include "eosw/tensor.hpp"
#include "eosw/vocab.hpp"

namespace eosw {

struct LossConfig {
  double eos_weight = 1.0;
  TokenId eos_token_id = Vocab::kEos;

  void validate() const {
    if (!(eos_weight >= 1.0) || !std::isfinite(eos_weight)) {
      throw RangeError("eos_weight must be a finite value >= 1, got " + std::to_string(eos_weight));
    }
  }
};

/// R = N / (N + W - 1).
inline double rescale_factor(std::size_t n, double eos_weight) {
  if (n == 0) throw LengthError("rescale_factor: empty sequence (N = 0)");
  if (!(eos_weight >= 1.0)) throw RangeError("rescale_factor: W must be >= 1");
  const double nd = static_cast<double>(n);
  return nd / (nd + eos_weight - 1.0);
}

/// Per-position loss coefficients. Positions with mask == false get 0 and do
/// not count towards N. A sequence without any counted EOS falls back to the
/// plain mean (R = 1) and logs a warning.
inline std::vector<double> effective_weights(std::span<const TokenId> targets, const std::vector<bool>& mask,
                                             const LossConfig& cfg) {
  if (mask.size() != targets.size()) {
    throw DimensionError("effective_weights: mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(targets.size()) + " targets");
  }
  cfg.validate();
  std::size_t n = 0, eos = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!mask[i]) continue;
    ++n;
    eos += targets[i] == cfg.eos_token_id;
  }
  if (n == 0) throw LengthError("effective_weights: no target positions");
  double r = rescale_factor(n, cfg.eos_weight);
  if (eos == 0) {
    if (cfg.eos_weight != 1.0) log::warn("target without EOS: EOS weighting skipped for this sequence");
    r = 1.0;
  }
  std::vector<double> coeffs(targets.size(), 0.0);
  const double base = r / static_cast<double>(n);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!mask[i]) continue;
    coeffs[i] = targets[i] == cfg.eos_token_id ? base * cfg.eos_weight : base;
  }
  return coeffs;
}

inline std::vector<double> effective_weights(std::span<const TokenId> targets, const LossConfig& cfg) {
  return effective_weights(targets, std::vector<bool>(targets.size(), true), cfg);
}

/// -sum_r coeffs[r] * log softmax(logits_r)[targets_r], differentiable in the
/// logits. Accumulates in double regardless of T.
template <typename T>
Tensor<T> weighted_nll(const Tensor<T>& logits, std::span<const TokenId> targets, std::span<const double> coeffs) {
  if (logits.dim() != 2) throw DimensionError("weighted_nll: logits must be a matrix, got " + shape_str(logits.shape()));
  const std::size_t rows = logits.rows(), v = logits.cols();
  if (targets.size() != rows || coeffs.size() != rows) {
    throw DimensionError("weighted_nll: " + std::to_string(rows) + " logit rows but " +
                         std::to_string(targets.size()) + " targets and " + std::to_string(coeffs.size()) +
                         " coefficients");
  }
  const T* x = logits.data().data();
  auto lse = std::make_shared<std::vector<double>>(rows);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const TokenId y = targets[r];
    if (y < 0 || static_cast<std::size_t>(y) >= v) {
      throw IndexError("weighted_nll: target id " + std::to_string(y) + " at row " + std::to_string(r) +
                       " outside vocabulary of " + std::to_string(v));
    }
    const T* row = x + r * v;
    double mx = -INFINITY;
    for (std::size_t c = 0; c < v; ++c) {
      if (std::isnan(row[c])) throw NumericError("weighted_nll: NaN logit at row " + std::to_string(r));
      mx = std::max(mx, static_cast<double>(row[c]));
    }
    double s = 0.0;
    for (std::size_t c = 0; c < v; ++c) s += std::exp(static_cast<double>(row[c]) - mx);
    (*lse)[r] = mx + std::log(s);
    if (coeffs[r] != 0.0) loss -= coeffs[r] * (static_cast<double>(row[y]) - (*lse)[r]);
  }
  std::vector<TokenId> ys(targets.begin(), targets.end());
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  return make_op_result<T>({1}, {static_cast<T>(loss)}, {logits},
                           [ys = std::move(ys), cs = std::move(cs), lse, rows, v](detail::Node<T>& self) {
                             auto g = parent_grad(self, 0);
                             if (g.empty()) return;
                             const double up = static_cast<double>(self.grad[0]);
                             const T* x = self.parents[0]->data.data();
                             for (std::size_t r = 0; r < rows; ++r) {
                               if (cs[r] == 0.0) continue;
                               const double c = up * cs[r];
                               for (std::size_t k = 0; k < v; ++k) {
                                 const double p = std::exp(static_cast<double>(x[r * v + k]) - (*lse)[r]);
                                 g[r * v + k] += static_cast<T>(c * (p - (static_cast<TokenId>(k) == ys[r])));
                               }
                             }
                           });
}

/// Weighted loss of one sequence whose logits rows align with `targets`.
template <typename T>
Tensor<T> weighted_ce(const Tensor<T>& logits, std::span<const TokenId> targets, const LossConfig& cfg) {
  if (targets.empty()) throw LengthError("weighted_ce: empty target sequence");
  const auto coeffs = effective_weights(targets, cfg);
  return weighted_nll(logits, targets, coeffs);
}

template <typename T>
Tensor<T> weighted_ce(const Tensor<T>& logits, std::span<const TokenId> targets, const std::vector<bool>& mask,
                      const LossConfig& cfg) {
  const auto coeffs = effective_weights(targets, mask, cfg);
  return weighted_nll(logits, targets, coeffs);
}

/// One sequence's targets and loss mask inside a packed batch.
struct MaskedTargets {
  std::span<const TokenId> targets;
  const std::vector<bool>* mask = nullptr;
};

/// Arithmetic mean of per-sequence weighted losses over row-packed logits.
template <typename T>
Tensor<T> batch_weighted_ce(const Tensor<T>& packed_logits, std::span<const MaskedTargets> batch,
                            const LossConfig& cfg) {
  if (batch.empty()) throw LengthError("batch_weighted_ce: empty batch");
  std::vector<TokenId> all_targets;
  std::vector<double> all_coeffs;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    const auto c = s.mask ? effective_weights(s.targets, *s.mask, cfg) : effective_weights(s.targets, cfg);
    all_targets.insert(all_targets.end(), s.targets.begin(), s.targets.end());
    for (double v : c) all_coeffs.push_back(v * inv_b);
  }
  return weighted_nll(packed_logits, all_targets, all_coeffs);
}

}  // namespace eosw
