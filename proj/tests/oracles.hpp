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

// Reference implementations used only by the tests. None of these call into
// the library's numerics; they are deliberately naive.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eosw/tensor.hpp"
#include "eosw/vocab.hpp"

namespace oracle {

inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                                  std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

inline std::vector<long double> softmax(const std::vector<long double>& x) {
  std::vector<long double> e(x.size());
  long double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (e[i] = std::exp(x[i]));
  for (auto& v : e) v /= s;
  return e;
}

/// -log softmax(row)[y], evaluated in long double.
inline long double nll(std::span<const double> row, int y) {
  long double s = 0;
  for (double v : row) s += std::exp(static_cast<long double>(v));
  return std::log(s) - static_cast<long double>(row[static_cast<std::size_t>(y)]);
}

/// Plain mean cross-entropy over rows.
inline long double mean_ce(std::span<const double> logits, std::size_t v, std::span<const std::int32_t> ys) {
  long double t = 0;
  for (std::size_t n = 0; n < ys.size(); ++n) t += nll(logits.subspan(n * v, v), ys[n]);
  return t / static_cast<long double>(ys.size());
}

/// Weighted loss computed straight from the definition: weight W at EOS
/// targets and 1 elsewhere, scaled by R/N with R = N / (N + W - 1).
inline long double weighted_ce(std::span<const double> logits, std::size_t v, std::span<const std::int32_t> ys,
                               double w, std::int32_t eos) {
  const long double n = static_cast<long double>(ys.size());
  const long double r = n / (n + w - 1.0L);
  long double t = 0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    const long double wi = ys[i] == eos ? w : 1.0L;
    t += wi * nll(logits.subspan(i * v, v), ys[i]);
  }
  return r / n * t;
}

/// Max relative error between an analytic gradient and central finite
/// differences of `f` with respect to the data of `x`.
template <typename F>
double gradcheck(eosw::Tensor<double>& x, F&& f, double h = 1e-5) {
  x.zero_grad();
  auto out = f();
  out.backward();
  std::vector<double> analytic(x.grad().begin(), x.grad().end());
  double worst = 0.0;
  eosw::NoGradGuard guard;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.mutable_data()[i] = orig + h;
    const double fp = f().item();
    x.mutable_data()[i] = orig - h;
    const double fm = f().item();
    x.mutable_data()[i] = orig;
    const double numeric = (fp - fm) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-3});
    worst = std::max(worst, std::abs(numeric - analytic[i]) / denom);
  }
  return worst;
}

// ROUGE oracles: tokenization by explicit character tests, counting by brute force.

/// F1 of precision a/b and recall c/d, reduced to one integer fraction
/// 2ac / (ad + bc) so the single final division is correctly rounded.
inline double f1_exact(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  if (a == 0 || c == 0) return 0.0;
  return static_cast<double>(2 * a * c) / static_cast<double>(a * d + b * c);
}

inline std::vector<std::string> tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline double rouge_n(const std::string& pred, const std::string& ref, std::size_t n) {
  const auto p = tokens(pred), r = tokens(ref);
  if (p.size() < n || r.size() < n) return 0.0;
  std::vector<std::vector<std::string>> pg, rg;
  for (std::size_t i = 0; i + n <= p.size(); ++i) pg.emplace_back(p.begin() + i, p.begin() + i + n);
  for (std::size_t i = 0; i + n <= r.size(); ++i) rg.emplace_back(r.begin() + i, r.begin() + i + n);
  // Greedy one-to-one matching of identical n-grams equals clipped multiset overlap.
  std::vector<bool> used(rg.size(), false);
  std::size_t overlap = 0;
  for (const auto& g : pg) {
    for (std::size_t j = 0; j < rg.size(); ++j) {
      if (!used[j] && rg[j] == g) {
        used[j] = true;
        ++overlap;
        break;
      }
    }
  }
  return f1_exact(overlap, pg.size(), overlap, rg.size());
}

/// LCS length by enumerating subsequences of the shorter side (exponential;
/// keep inputs short).
inline std::size_t lcs_bruteforce(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const auto& s = a.size() <= b.size() ? a : b;
  const auto& t = a.size() <= b.size() ? b : a;
  std::size_t best = 0;
  const std::size_t n = s.size();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    const auto len = static_cast<std::size_t>(__builtin_popcount(mask));
    if (len <= best) continue;
    std::size_t j = 0;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      if (!(mask >> i & 1u)) continue;
      while (j < t.size() && t[j] != s[i]) ++j;
      if (j == t.size()) ok = false;
      ++j;
    }
    if (ok) best = len;
  }
  return best;
}

inline double rouge_l(const std::string& pred, const std::string& ref) {
  const auto p = tokens(pred), r = tokens(ref);
  if (p.empty() || r.empty()) return 0.0;
  const std::size_t l = lcs_bruteforce(p, r);
  return f1_exact(l, p.size(), l, r.size());
}

/// A deterministic step model over a small vocabulary whose next-token
/// distribution is a pseudo-random function of the full prefix.
class TableModel {
 public:
  TableModel(std::size_t vocab, std::uint64_t seed, std::size_t room = 1000) : vocab_(vocab), seed_(seed), room_(room) {}

  class State {
   public:
    State(const TableModel* m, std::vector<eosw::TokenId> prefix) : m_(m), prefix_(std::move(prefix)) {}
    std::vector<double> log_probs() const { return m_->log_probs(prefix_); }
    void append(eosw::TokenId t) { prefix_.push_back(t); }
    std::size_t room() const { return m_->room_ > prefix_.size() ? m_->room_ - prefix_.size() : 0; }

   private:
    const TableModel* m_;
    std::vector<eosw::TokenId> prefix_;
  };

  State start(std::span<const eosw::TokenId> prompt) const { return State(this, {prompt.begin(), prompt.end()}); }

  std::vector<double> log_probs(const std::vector<eosw::TokenId>& prefix) const {
    std::uint64_t h = seed_ * 0x9E3779B97F4A7C15ULL + 1469598103934665603ULL;
    for (auto t : prefix) h = (h ^ static_cast<std::uint64_t>(t + 7)) * 1099511628211ULL;
    std::mt19937_64 rng(h);
    std::normal_distribution<double> nd(0.0, 1.5);
    std::vector<long double> x(vocab_);
    for (auto& v : x) v = nd(rng);
    const auto p = softmax(x);
    std::vector<double> out(vocab_);
    for (std::size_t i = 0; i < vocab_; ++i) out[i] = static_cast<double>(std::log(p[i]));
    return out;
  }

  std::size_t vocab() const { return vocab_; }

 private:
  std::size_t vocab_;
  std::uint64_t seed_;
  std::size_t room_;
};

struct ScoredSequence {
  std::vector<eosw::TokenId> ids;
  double sum_logprob;
};

/// Every continuation that ends in EOS within `cap` tokens, plus every
/// EOS-free continuation of exactly `cap` tokens.
inline std::vector<ScoredSequence> enumerate(const TableModel& m, std::span<const eosw::TokenId> prompt,
                                             std::size_t cap, eosw::TokenId eos) {
  std::vector<ScoredSequence> out;
  std::function<void(std::vector<eosw::TokenId>&, std::vector<eosw::TokenId>&, double)> rec =
      [&](std::vector<eosw::TokenId>& prefix, std::vector<eosw::TokenId>& gen, double sum) {
        const auto lp = m.log_probs(prefix);
        for (std::size_t t = 0; t < lp.size(); ++t) {
          const auto tok = static_cast<eosw::TokenId>(t);
          gen.push_back(tok);
          const double s = sum + lp[t];
          if (tok == eos || gen.size() == cap) {
            out.push_back({gen, s});
          } else {
            prefix.push_back(tok);
            rec(prefix, gen, s);
            prefix.pop_back();
          }
          gen.pop_back();
        }
      };
  std::vector<eosw::TokenId> prefix(prompt.begin(), prompt.end()), gen;
  rec(prefix, gen, 0.0);
  return out;
}

/// Argmax of sum / len^lp over the enumeration; ties to the lexicographically
/// smallest id sequence.
inline ScoredSequence exhaustive_best(const std::vector<ScoredSequence>& all, double lp) {
  const ScoredSequence* best = nullptr;
  double best_score = 0;
  for (const auto& s : all) {
    const double score = s.sum_logprob / std::pow(static_cast<double>(s.ids.size()), lp);
    if (!best || score > best_score || (score == best_score && s.ids < best->ids)) {
      best = &s;
      best_score = score;
    }
  }
  return *best;
}

}  // namespace oracle
