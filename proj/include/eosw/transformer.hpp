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
/// Small decoder-only transformer over the character vocabulary.
///
/// Training examples are packed as `BOS source SEP target EOS`; the loss
/// mask produced by pack_example() covers only positions whose next token
/// belongs to the target (including the closing EOS).

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eosw/ops.hpp"
#include "eosw/tensor.hpp"
#include "eosw/vocab.hpp"

namespace eosw {

struct ModelConfig {
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t n_layers = 4;
  std::size_t ff_mult = 4;
  std::size_t max_seq_len = 512;
  std::size_t vocab_size = Vocab::size();
  double dropout_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (d_model == 0 || n_heads == 0 || n_layers == 0 || ff_mult == 0 || max_seq_len == 0 ||
        vocab_size == 0) {
      throw RangeError("model config dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
      throw RangeError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                       std::to_string(n_heads));
    }
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw RangeError("dropout_rate must be in [0, 1)");
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Input/target alignment for one training example.
struct PackedExample {
  std::vector<TokenId> inputs;   // BOS source SEP target
  std::vector<TokenId> targets;  // inputs shifted left by one, ending in EOS
  std::vector<bool> loss_mask;   // true where targets[i] is a target token or EOS
};

inline PackedExample pack_example(std::span<const TokenId> source, std::span<const TokenId> target) {
  PackedExample ex;
  const std::size_t n = source.size() + target.size() + 2;
  ex.inputs.reserve(n);
  ex.inputs.push_back(Vocab::kBos);
  ex.inputs.insert(ex.inputs.end(), source.begin(), source.end());
  ex.inputs.push_back(Vocab::kSep);
  ex.inputs.insert(ex.inputs.end(), target.begin(), target.end());
  ex.targets.assign(ex.inputs.begin() + 1, ex.inputs.end());
  ex.targets.push_back(Vocab::kEos);
  ex.loss_mask.assign(n, false);
  for (std::size_t i = source.size() + 1; i < n; ++i) ex.loss_mask[i] = true;
  return ex;
}

/// Prompt for generation: `BOS source SEP`.
inline std::vector<TokenId> make_prompt(std::span<const TokenId> source) {
  std::vector<TokenId> p;
  p.reserve(source.size() + 2);
  p.push_back(Vocab::kBos);
  p.insert(p.end(), source.begin(), source.end());
  p.push_back(Vocab::kSep);
  return p;
}

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
class DecodeSession;

template <typename T>
class Transformer {
 public:
  using Rng = std::mt19937_64;

  struct Block {
    Tensor<T> ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o;
    Tensor<T> ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
  };

  explicit Transformer(ModelConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const std::size_t d = cfg_.d_model, f = cfg_.ff_mult * cfg_.d_model;
    Rng rng(cfg_.seed);
    const double std_w = 0.02;
    const double std_proj = 0.02 / std::sqrt(2.0 * static_cast<double>(cfg_.n_layers));
    tok_emb_ = add_param("tok_emb", {cfg_.vocab_size, d}, rng, std_w);
    pos_emb_ = add_param("pos_emb", {cfg_.max_seq_len, d}, rng, std_w);
    for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
      const std::string p = "h" + std::to_string(l) + ".";
      Block b;
      b.ln1_g = add_const(p + "ln1.g", {d}, T(1));
      b.ln1_b = add_const(p + "ln1.b", {d}, T(0));
      b.w_qkv = add_param(p + "attn.w_qkv", {d, 3 * d}, rng, std_w);
      b.b_qkv = add_const(p + "attn.b_qkv", {3 * d}, T(0));
      b.w_o = add_param(p + "attn.w_o", {d, d}, rng, std_proj);
      b.b_o = add_const(p + "attn.b_o", {d}, T(0));
      b.ln2_g = add_const(p + "ln2.g", {d}, T(1));
      b.ln2_b = add_const(p + "ln2.b", {d}, T(0));
      b.w_fc = add_param(p + "mlp.w_fc", {d, f}, rng, std_w);
      b.b_fc = add_const(p + "mlp.b_fc", {f}, T(0));
      b.w_proj = add_param(p + "mlp.w_proj", {f, d}, rng, std_proj);
      b.b_proj = add_const(p + "mlp.b_proj", {d}, T(0));
      blocks_.push_back(std::move(b));
    }
    lnf_g_ = add_const("ln_f.g", {d}, T(1));
    lnf_b_ = add_const("ln_f.b", {d}, T(0));
    head_ = add_param("head", {d, cfg_.vocab_size}, rng, std_w);
  }

  // Parameters are shared graph leaves; copies would alias them.
  Transformer(const Transformer&) = delete;
  Transformer& operator=(const Transformer&) = delete;
  Transformer(Transformer&&) = default;
  Transformer& operator=(Transformer&&) = default;

  const ModelConfig& config() const { return cfg_; }
  std::vector<NamedParameter<T>>& parameters() { return params_; }
  const std::vector<NamedParameter<T>>& parameters() const { return params_; }
  const std::vector<Block>& blocks() const { return blocks_; }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  /// Logits [N × |V|] for one sequence.
  Tensor<T> forward(std::span<const TokenId> ids, Rng* dropout_rng = nullptr) const {
    std::vector<std::span<const TokenId>> one{ids};
    return forward_packed(one, dropout_rng);
  }

  /// Logits for several sequences packed row-wise in order. Rows of different
  /// sequences never attend to each other.
  Tensor<T> forward_packed(std::span<const std::span<const TokenId>> seqs, Rng* dropout_rng = nullptr) const {
    std::vector<TokenId> ids, positions;
    std::vector<Segment> segments;
    for (const auto& s : seqs) {
      if (s.size() > cfg_.max_seq_len) {
        throw LengthError("sequence of length " + std::to_string(s.size()) + " exceeds max_seq_len " +
                          std::to_string(cfg_.max_seq_len));
      }
      if (s.empty()) throw LengthError("empty sequence");
      segments.push_back({ids.size(), s.size()});
      ids.insert(ids.end(), s.begin(), s.end());
      for (std::size_t i = 0; i < s.size(); ++i) positions.push_back(static_cast<TokenId>(i));
    }
    const double rate = dropout_rng ? cfg_.dropout_rate : 0.0;
    Tensor<T> x = add(embedding_lookup(tok_emb_, ids), embedding_lookup(pos_emb_, positions));
    for (const auto& b : blocks_) {
      Tensor<T> h = add_rowwise(mul_rowwise(layernorm(x), b.ln1_g), b.ln1_b);
      Tensor<T> qkv = add_rowwise(matmul(h, b.w_qkv), b.b_qkv);
      Tensor<T> a = add_rowwise(matmul(causal_attention(qkv, segments, cfg_.n_heads), b.w_o), b.b_o);
      if (rate > 0.0) a = dropout(a, rate, *dropout_rng);
      x = add(x, a);
      h = add_rowwise(mul_rowwise(layernorm(x), b.ln2_g), b.ln2_b);
      Tensor<T> m = gelu(add_rowwise(matmul(h, b.w_fc), b.b_fc));
      m = add_rowwise(matmul(m, b.w_proj), b.b_proj);
      if (rate > 0.0) m = dropout(m, rate, *dropout_rng);
      x = add(x, m);
    }
    x = add_rowwise(mul_rowwise(layernorm(x), lnf_g_), lnf_b_);
    return matmul(x, head_);
  }

  DecodeSession<T> start(std::span<const TokenId> prompt) const;

  /// Closed-form parameter count for a configuration.
  static std::size_t parameter_count(const ModelConfig& c) {
    const std::size_t d = c.d_model, f = c.ff_mult;
    const std::size_t per_block = (4 + 2 * f) * d * d + (9 + f) * d;
    return d * (c.vocab_size + c.max_seq_len) + c.n_layers * per_block + 2 * d + d * c.vocab_size;
  }

 private:
  Tensor<T> add_param(std::string name, Shape shape, Rng& rng, double stddev) {
    std::normal_distribution<double> nd(0.0, stddev);
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(nd(rng));
    Tensor<T> t(std::move(shape), std::move(v), true);
    params_.push_back({std::move(name), t});
    return t;
  }

  Tensor<T> add_const(std::string name, Shape shape, T value) {
    Tensor<T> t = Tensor<T>::full(std::move(shape), value, true);
    params_.push_back({std::move(name), t});
    return t;
  }

  ModelConfig cfg_;
  std::vector<NamedParameter<T>> params_;
  Tensor<T> tok_emb_, pos_emb_, lnf_g_, lnf_b_, head_;
  std::vector<Block> blocks_;

  friend class DecodeSession<T>;
};

/// Incremental decoding state with a key/value cache. Copyable so beam search
/// can fork hypotheses. Reads model parameters without touching the graph.
template <typename T>
class DecodeSession {
 public:
  using Vec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

  explicit DecodeSession(const Transformer<T>& model)
      : model_(&model), k_(model.cfg_.n_layers), v_(model.cfg_.n_layers) {}

  std::size_t position() const { return pos_; }
  /// Tokens that can still be appended before hitting max_seq_len.
  std::size_t room() const { return model_->cfg_.max_seq_len - pos_; }

  std::span<const T> logits() const { return logits_; }

  std::vector<double> log_probs() const {
    std::vector<double> out(logits_.size());
    double mx = -INFINITY;
    for (T v : logits_) mx = std::max(mx, static_cast<double>(v));
    double s = 0;
    for (T v : logits_) s += std::exp(static_cast<double>(v) - mx);
    const double lse = mx + std::log(s);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(logits_[i]) - lse;
    return out;
  }

  void append(TokenId id) {
    const auto& m = *model_;
    const auto& c = m.cfg_;
    if (pos_ >= c.max_seq_len) {
      throw LengthError("decode position " + std::to_string(pos_) + " reached max_seq_len");
    }
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw IndexError("token id " + std::to_string(id) + " outside vocabulary");
    }
    const auto d = static_cast<Eigen::Index>(c.d_model);
    const auto dh = static_cast<Eigen::Index>(c.d_model / c.n_heads);
    const T scale_qk = T(1) / std::sqrt(T(dh));
    Vec x = row(m.tok_emb_, id) + row(m.pos_emb_, static_cast<TokenId>(pos_));
    for (std::size_t l = 0; l < m.blocks_.size(); ++l) {
      const auto& b = m.blocks_[l];
      Vec h = norm(x, b.ln1_g, b.ln1_b);
      Vec qkv = h * mat(b.w_qkv) + vec(b.b_qkv);
      auto& kc = k_[l];
      auto& vc = v_[l];
      kc.insert(kc.end(), qkv.data() + d, qkv.data() + 2 * d);
      vc.insert(vc.end(), qkv.data() + 2 * d, qkv.data() + 3 * d);
      const auto n = static_cast<Eigen::Index>(pos_ + 1);
      Vec att(d);
      for (Eigen::Index hd = 0; hd < static_cast<Eigen::Index>(c.n_heads); ++hd) {
        detail::CStrided<T> keys(kc.data() + hd * dh, n, dh, Eigen::OuterStride<>(d));
        detail::CStrided<T> vals(vc.data() + hd * dh, n, dh, Eigen::OuterStride<>(d));
        Vec q = qkv.segment(hd * dh, dh);
        Vec s = (q * keys.transpose()) * scale_qk;
        detail::softmax_row(s.data(), s.data(), static_cast<std::size_t>(n));
        att.segment(hd * dh, dh) = s * vals;
      }
      x += att * mat(b.w_o) + vec(b.b_o);
      h = norm(x, b.ln2_g, b.ln2_b);
      Vec f = h * mat(b.w_fc) + vec(b.b_fc);
      for (Eigen::Index i = 0; i < f.size(); ++i) {
        const T u = f[i];
        f[i] = T(0.5) * u * (T(1) + std::tanh(T(0.7978845608028654) * (u + T(0.044715) * u * u * u)));
      }
      x += f * mat(b.w_proj) + vec(b.b_proj);
    }
    x = norm(x, m.lnf_g_, m.lnf_b_);
    Vec lg = x * mat(m.head_);
    logits_.assign(lg.data(), lg.data() + lg.size());
    ++pos_;
  }

 private:
  static detail::CMap<T> mat(const Tensor<T>& t) {
    return detail::CMap<T>(t.data().data(), t.rows(), t.cols());
  }
  static Eigen::Map<const Vec> vec(const Tensor<T>& t) {
    return Eigen::Map<const Vec>(t.data().data(), t.size());
  }
  static Eigen::Map<const Vec> row(const Tensor<T>& t, TokenId r) {
    return Eigen::Map<const Vec>(t.data().data() + r * t.cols(), t.cols());
  }
  static Vec norm(const Vec& x, const Tensor<T>& g, const Tensor<T>& b) {
    const auto n = x.size();
    T mean = 0;
    for (Eigen::Index i = 0; i < n; ++i) mean += x[i];
    mean /= T(n);
    T var = 0;
    for (Eigen::Index i = 0; i < n; ++i) var += (x[i] - mean) * (x[i] - mean);
    var /= T(n);
    const T is = T(1) / std::sqrt(var + T(1e-5));
    Vec y(n);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = (x[i] - mean) * is * g.data()[i] + b.data()[i];
    return y;
  }

  const Transformer<T>* model_;
  std::vector<std::vector<T>> k_, v_;
  std::vector<T> logits_;
  std::size_t pos_ = 0;
};

template <typename T>
DecodeSession<T> Transformer<T>::start(std::span<const TokenId> prompt) const {
  if (prompt.empty()) throw LengthError("empty prompt");
  if (prompt.size() > cfg_.max_seq_len) {
    throw LengthError("prompt of length " + std::to_string(prompt.size()) + " exceeds max_seq_len " +
                      std::to_string(cfg_.max_seq_len));
  }
  DecodeSession<T> s(*this);
  for (TokenId id : prompt) s.append(id);
  return s;
}

}  // namespace eosw
