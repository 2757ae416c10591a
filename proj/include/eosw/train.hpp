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
/// AdamW with decoupled weight decay, linear and cosine learning-rate
/// schedules, and the training loop with validation-loss model selection.
///
/// Run directory layout written by train():
///   config.json              model, train and loss configs with their hashes
///   loss_curve.csv           step,train_loss,val_loss,lr (val_loss blank off-cadence)
///   data_order.log           one line per step: step followed by sample indices
///   checkpoints/step-N.ckpt  snapshot at every evaluation
///   best.ckpt                copy of the lowest-validation-loss snapshot
///   best.json                pointer to that snapshot

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eosw/checkpoint.hpp"
#include "eosw/config.hpp"
#include "eosw/data.hpp"
#include "eosw/error.hpp"
#include "eosw/log.hpp"
#include "eosw/loss.hpp"
#include "eosw/tensor.hpp"
#include "eosw/transformer.hpp"

namespace eosw {

enum class Schedule { kLinear, kCosine };
enum class Precision { kSingle, kDouble };

inline const char* to_string(Schedule s) { return s == Schedule::kLinear ? "linear" : "cosine"; }
inline const char* to_string(Precision p) { return p == Precision::kSingle ? "single" : "double"; }

inline Schedule parse_schedule(const std::string& s) {
  if (s == "linear") return Schedule::kLinear;
  if (s == "cosine") return Schedule::kCosine;
  throw ParseError("unknown schedule '" + s + "'");
}

inline Precision parse_precision(const std::string& s) {
  if (s == "single" || s == "f32" || s == "float") return Precision::kSingle;
  if (s == "double" || s == "f64") return Precision::kDouble;
  throw ParseError("unknown precision '" + s + "'");
}

struct TrainConfig {
  double base_lr = 3e-4;
  double weight_decay = 0.01;
  Schedule schedule = Schedule::kLinear;
  std::size_t max_steps = 1000;
  std::size_t batch_size = 16;
  std::size_t eval_every = 100;
  std::uint64_t seed = 0;
  Precision precision = Precision::kSingle;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 1.0;  // global L2 norm; 0 disables

  void validate() const {
    if (max_steps < 1) throw RangeError("max_steps must be >= 1");
    if (batch_size < 1) throw RangeError("batch_size must be >= 1");
    if (eval_every < 1 || max_steps % eval_every != 0) {
      throw RangeError("eval_every (" + std::to_string(eval_every) + ") must divide max_steps (" +
                       std::to_string(max_steps) + ")");
    }
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw RangeError("base_lr must be positive");
    if (!(weight_decay >= 0.0)) throw RangeError("weight_decay must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw RangeError("betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw RangeError("eps must be positive");
    if (!(grad_clip >= 0.0)) throw RangeError("grad_clip must be >= 0");
  }
};

inline Json to_json(const TrainConfig& c) {
  return Json{{"base_lr", c.base_lr},       {"weight_decay", c.weight_decay},
              {"schedule", to_string(c.schedule)}, {"max_steps", c.max_steps},
              {"batch_size", c.batch_size}, {"eval_every", c.eval_every},
              {"seed", c.seed},             {"precision", to_string(c.precision)},
              {"beta1", c.beta1},           {"beta2", c.beta2},
              {"eps", c.eps},               {"grad_clip", c.grad_clip}};
}

inline TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  detail::read_opt(j, "base_lr", c.base_lr);
  detail::read_opt(j, "weight_decay", c.weight_decay);
  if (auto it = j.find("schedule"); it != j.end()) c.schedule = parse_schedule(it->get<std::string>());
  detail::read_opt(j, "max_steps", c.max_steps);
  detail::read_opt(j, "batch_size", c.batch_size);
  detail::read_opt(j, "eval_every", c.eval_every);
  detail::read_opt(j, "seed", c.seed);
  if (auto it = j.find("precision"); it != j.end()) c.precision = parse_precision(it->get<std::string>());
  detail::read_opt(j, "beta1", c.beta1);
  detail::read_opt(j, "beta2", c.beta2);
  detail::read_opt(j, "eps", c.eps);
  detail::read_opt(j, "grad_clip", c.grad_clip);
  return c;
}

/// Learning rate after `step` completed updates. Reaches 0 at max_steps.
inline double lr_at(Schedule schedule, double base_lr, std::size_t step, std::size_t max_steps) {
  if (max_steps == 0) throw RangeError("lr_at: max_steps must be >= 1");
  if (step > max_steps) {
    throw RangeError("lr_at: step " + std::to_string(step) + " exceeds max_steps " + std::to_string(max_steps));
  }
  const double frac = static_cast<double>(step) / static_cast<double>(max_steps);
  if (schedule == Schedule::kLinear) return base_lr * (1.0 - frac);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

struct AdamWHyper {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One AdamW update of a flat parameter block at step t (1-based). Moments
/// are kept in double. Decay multiplies the parameter by (1 - lr*wd) before
/// the adaptive step and never enters the moments.
template <typename T>
void adamw_update(std::span<T> params, std::span<const T> grads, std::span<double> m, std::span<double> v,
                  std::size_t t, const AdamWHyper& h) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size()) {
    throw DimensionError("adamw_update: size mismatch");
  }
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  const double shrink = 1.0 - h.lr * h.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = static_cast<double>(grads[i]);
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
    double p = static_cast<double>(params[i]) * shrink;
    p -= h.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + h.eps);
    params[i] = static_cast<T>(p);
  }
}

/// AdamW over a model's named parameters. Rank-1 parameters (biases and
/// layer-norm gains) are exempt from weight decay.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<NamedParameter<T>>& params, AdamWHyper hyper) : params_(params), hyper_(hyper) {
    for (const auto& p : params_) {
      m_.emplace_back(p.tensor.size(), 0.0);
      v_.emplace_back(p.tensor.size(), 0.0);
    }
  }

  std::size_t steps() const { return t_; }
  AdamWHyper& hyper() { return hyper_; }

  /// Applies one update with the given learning rate. Parameters without a
  /// gradient are treated as having a zero gradient.
  void step(double lr) {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) continue;
      for (T g : p.tensor.grad()) {
        if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
      }
    }
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      AdamWHyper h = hyper_;
      h.lr = lr;
      if (p.tensor.dim() <= 1) h.weight_decay = 0.0;
      std::vector<T> zeros;
      std::span<const T> g;
      if (p.tensor.has_grad()) {
        g = p.tensor.grad();
      } else {
        zeros.assign(p.tensor.size(), T(0));
        g = zeros;
      }
      adamw_update<T>(p.tensor.mutable_data(), g, m_[i], v_[i], t_, h);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  std::vector<NamedParameter<T>>& params_;
  AdamWHyper hyper_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

/// Global L2 norm of all parameter gradients.
template <typename T>
double grad_norm(const std::vector<NamedParameter<T>>& params) {
  double s = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.grad()) s += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(s);
}

template <typename T>
void scale_grads(std::vector<NamedParameter<T>>& params, double factor) {
  for (auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (T& g : p.tensor.mutable_grad()) g = static_cast<T>(static_cast<double>(g) * factor);
  }
}

/// A sample encoded and packed for training.
struct EncodedExample {
  PackedExample packed;
  std::string id;
};

inline std::vector<EncodedExample> encode_samples(std::span<const Sample> samples, std::size_t max_seq_len) {
  std::vector<EncodedExample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto src = Vocab::encode(Vocab::sanitize(s.source));
    const auto tgt = Vocab::encode(Vocab::sanitize(s.reference));
    auto packed = pack_example(src.ids, tgt.ids);
    if (packed.inputs.size() > max_seq_len) {
      throw LengthError("sample '" + s.id + "' packs to " + std::to_string(packed.inputs.size()) +
                        " tokens, above max_seq_len " + std::to_string(max_seq_len));
    }
    out.push_back({std::move(packed), s.id});
  }
  return out;
}

/// Mean weighted loss of `model` over `examples`, in batches, without a graph.
template <typename T>
double mean_weighted_loss(const Transformer<T>& model, std::span<const EncodedExample> examples,
                          const LossConfig& loss_cfg, std::size_t batch_size) {
  if (examples.empty()) throw LengthError("mean_weighted_loss: no examples");
  NoGradGuard guard;
  double total = 0.0;
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const std::size_t end = std::min(examples.size(), start + batch_size);
    std::vector<std::span<const TokenId>> inputs;
    std::vector<MaskedTargets> targets;
    for (std::size_t i = start; i < end; ++i) {
      inputs.emplace_back(examples[i].packed.inputs);
      targets.push_back({examples[i].packed.targets, &examples[i].packed.loss_mask});
    }
    const auto logits = model.forward_packed(inputs);
    total += static_cast<double>(batch_weighted_ce(logits, std::span<const MaskedTargets>(targets), loss_cfg).item()) *
             static_cast<double>(end - start);
  }
  return total / static_cast<double>(examples.size());
}

struct CurveRow {
  std::size_t step = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double lr = 0.0;
};

template <typename T>
struct TrainResult {
  Checkpoint<T> best;
  std::vector<CurveRow> curve;
  std::vector<std::vector<std::size_t>> data_order;
  bool diverged = false;
  std::size_t steps_run = 0;
};

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline void write_loss_curve(const std::string& path, std::span<const CurveRow> curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << "step,train_loss,val_loss,lr\n";
  for (const auto& r : curve) {
    out << r.step << ',' << format_double(r.train_loss) << ',' << (r.val_loss ? format_double(*r.val_loss) : "")
        << ',' << format_double(r.lr) << '\n';
  }
}

inline void write_data_order(const std::string& path, const std::vector<std::vector<std::size_t>>& order) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (std::size_t s = 0; s < order.size(); ++s) {
    out << s + 1;
    for (std::size_t i : order[s]) out << ' ' << i;
    out << '\n';
  }
}

inline Json run_metadata(const ModelConfig& m, const TrainConfig& t, const LossConfig& l) {
  return Json{{"model_config_hash", config_hash(to_json(m))},
              {"train_config_hash", config_hash(to_json(t))},
              {"loss_config_hash", config_hash(to_json(l))},
              {"seed", t.seed}};
}

/// Trains `model` in place and returns the lowest-validation-loss snapshot.
/// On a non-finite training loss the run stops, `diverged` is set and the
/// last good snapshot is returned. When `run_dir` is non-empty the layout
/// described at the top of this file is written there.
template <typename T>
TrainResult<T> train(Transformer<T>& model, std::span<const Sample> train_set, std::span<const Sample> val_set,
                     const TrainConfig& cfg, const LossConfig& loss_cfg, const std::string& run_dir = "") {
  cfg.validate();
  loss_cfg.validate();
  if (train_set.empty()) throw InsufficientDataError("train: empty training split");
  if (val_set.empty()) throw InsufficientDataError("train: empty validation split");
  const auto train_ex = encode_samples(train_set, model.config().max_seq_len);
  const auto val_ex = encode_samples(val_set, model.config().max_seq_len);
  const Json meta = run_metadata(model.config(), cfg, loss_cfg);

  namespace fs = std::filesystem;
  if (!run_dir.empty()) {
    fs::create_directories(fs::path(run_dir) / "checkpoints");
    std::ofstream out(fs::path(run_dir) / "config.json", std::ios::trunc);
    out << Json{{"model", to_json(model.config())},
                {"train", to_json(cfg)},
                {"loss", to_json(loss_cfg)},
                {"metadata", meta}}
               .dump(2)
        << '\n';
  }

  AdamWHyper hyper{cfg.base_lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps};
  AdamW<T> opt(model.parameters(), hyper);
  std::mt19937_64 order_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);

  TrainResult<T> res;
  res.best = snapshot(model, 0, std::numeric_limits<double>::infinity(), meta);

  std::vector<std::size_t> perm(train_ex.size());
  std::size_t cursor = perm.size();

  for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
    std::vector<std::size_t> batch;
    while (batch.size() < cfg.batch_size) {
      if (cursor == perm.size()) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(perm[cursor++]);
    }
    res.data_order.push_back(batch);

    std::vector<std::span<const TokenId>> inputs;
    std::vector<MaskedTargets> targets;
    for (std::size_t i : batch) {
      inputs.emplace_back(train_ex[i].packed.inputs);
      targets.push_back({train_ex[i].packed.targets, &train_ex[i].packed.loss_mask});
    }
    const double lr = lr_at(cfg.schedule, cfg.base_lr, step - 1, cfg.max_steps);
    opt.zero_grad();
    auto logits = model.forward_packed(inputs, model.config().dropout_rate > 0 ? &dropout_rng : nullptr);
    auto loss = batch_weighted_ce(logits, std::span<const MaskedTargets>(targets), loss_cfg);
    const double train_loss = static_cast<double>(loss.item());
    if (!std::isfinite(train_loss)) {
      log::error("training loss is not finite at step " + std::to_string(step) + "; stopping");
      res.diverged = true;
      break;
    }
    loss.backward();
    if (cfg.grad_clip > 0.0) {
      const double norm = grad_norm(model.parameters());
      if (!std::isfinite(norm)) {
        log::error("gradient norm is not finite at step " + std::to_string(step) + "; stopping");
        res.diverged = true;
        break;
      }
      if (norm > cfg.grad_clip) scale_grads(model.parameters(), cfg.grad_clip / norm);
    }
    opt.step(lr);
    res.steps_run = step;

    CurveRow row{step, train_loss, std::nullopt, lr};
    if (step % cfg.eval_every == 0) {
      const double val = mean_weighted_loss(model, std::span<const EncodedExample>(val_ex), loss_cfg, cfg.batch_size);
      row.val_loss = val;
      if (!std::isfinite(val)) {
        log::error("validation loss is not finite at step " + std::to_string(step) + "; stopping");
        res.curve.push_back(row);
        res.diverged = true;
        break;
      }
      auto snap = snapshot(model, step, val, meta);
      if (!run_dir.empty()) {
        save_checkpoint((fs::path(run_dir) / "checkpoints" / ("step-" + std::to_string(step) + ".ckpt")).string(), snap);
      }
      if (val < res.best.val_loss) res.best = snap;
      log::info("step " + std::to_string(step) + " train_loss " + format_double(train_loss) + " val_loss " +
                format_double(val));
    }
    res.curve.push_back(row);
  }

  if (!std::isfinite(res.best.val_loss)) {
    // No evaluation completed; fall back to the current weights if they are usable.
    if (!res.diverged) {
      const double val = mean_weighted_loss(model, std::span<const EncodedExample>(val_ex), loss_cfg, cfg.batch_size);
      res.best = snapshot(model, res.steps_run, val, meta);
    }
  }
  if (!run_dir.empty()) {
    write_loss_curve((fs::path(run_dir) / "loss_curve.csv").string(), res.curve);
    write_data_order((fs::path(run_dir) / "data_order.log").string(), res.data_order);
    save_checkpoint((fs::path(run_dir) / "best.ckpt").string(), res.best);
    std::ofstream out(fs::path(run_dir) / "best.json", std::ios::trunc);
    out << Json{{"step", res.best.step},
                {"checkpoint", "checkpoints/step-" + std::to_string(res.best.step) + ".ckpt"},
                {"val_loss", std::isfinite(res.best.val_loss) ? Json(res.best.val_loss) : Json(nullptr)}}
               .dump(2)
        << '\n';
  }
  restore(model, res.best);
  return res;
}

}  // namespace eosw
