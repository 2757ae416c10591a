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
/// Summary metrics: ROUGE-N/L/Lsum (F1, lowercased, whitespace tokens, no
/// stemming), the share of over-limit summaries, average extra characters,
/// and the share of summaries that do not end in terminal punctuation.

#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eosw/data.hpp"
#include "eosw/error.hpp"
#include "eosw/vocab.hpp"

namespace eosw {

inline std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// 2·overlap / (|pred| + |ref|), the F1 of precision overlap/|pred| and
/// recall overlap/|ref|. Zero when either side is empty.
inline double f1_from_counts(std::size_t overlap, std::size_t n_pred, std::size_t n_ref) {
  if (n_pred == 0 || n_ref == 0 || overlap == 0) return 0.0;
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(n_pred + n_ref);
}

namespace detail {

inline std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks,
                                                                     std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++counts[{toks.begin() + i, toks.begin() + i + n}];
  return counts;
}

using LcsTable = std::vector<std::vector<std::size_t>>;

inline LcsTable lcs_table(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  LcsTable t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  return t;
}

// Indices into `ref` of one LCS between ref and cand.
inline std::vector<std::size_t> lcs_indices(const std::vector<std::string>& ref, const std::vector<std::string>& cand) {
  const auto t = lcs_table(ref, cand);
  std::vector<std::size_t> idx;
  std::size_t i = ref.size(), j = cand.size();
  while (i > 0 && j > 0) {
    if (ref[i - 1] == cand[j - 1]) {
      idx.push_back(i - 1);
      --i;
      --j;
    } else if (t[i][j - 1] > t[i - 1][j]) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// ROUGE-N F1 in [0, 1] over clipped n-gram multiset overlap.
inline double rouge_n(std::string_view pred, std::string_view ref, std::size_t n) {
  if (n == 0) throw RangeError("rouge_n: n must be >= 1");
  const auto pc = detail::ngram_counts(rouge_tokens(pred), n);
  const auto rc = detail::ngram_counts(rouge_tokens(ref), n);
  std::size_t np = 0, nr = 0, overlap = 0;
  for (const auto& [g, c] : pc) np += c;
  for (const auto& [g, c] : rc) nr += c;
  for (const auto& [g, c] : pc) {
    if (auto it = rc.find(g); it != rc.end()) overlap += std::min(c, it->second);
  }
  return f1_from_counts(overlap, np, nr);
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return detail::lcs_table(a, b)[a.size()][b.size()];
}

/// ROUGE-L F1 from the LCS of the whole token sequences.
inline double rouge_l(std::string_view pred, std::string_view ref) {
  const auto p = rouge_tokens(pred), r = rouge_tokens(ref);
  return f1_from_counts(lcs_length(p, r), p.size(), r.size());
}

/// Summary-level ROUGE-L: union LCS of each reference sentence against all
/// predicted sentences, with per-token hit clipping.
inline double rouge_lsum(std::string_view pred, std::string_view ref) {
  std::vector<std::vector<std::string>> ps, rs;
  std::map<std::string, std::size_t> pcnt, rcnt;
  std::size_t np = 0, nr = 0;
  for (const auto& s : split_sentences(pred)) {
    ps.push_back(rouge_tokens(s));
    for (const auto& t : ps.back()) ++pcnt[t];
    np += ps.back().size();
  }
  for (const auto& s : split_sentences(ref)) {
    rs.push_back(rouge_tokens(s));
    for (const auto& t : rs.back()) ++rcnt[t];
    nr += rs.back().size();
  }
  if (np == 0 || nr == 0) return 0.0;
  std::size_t hits = 0;
  for (const auto& r : rs) {
    std::set<std::size_t> uni;
    for (const auto& p : ps) {
      for (std::size_t i : detail::lcs_indices(r, p)) uni.insert(i);
    }
    for (std::size_t i : uni) {
      const auto& tok = r[i];
      if (pcnt[tok] > 0 && rcnt[tok] > 0) {
        ++hits;
        --pcnt[tok];
        --rcnt[tok];
      }
    }
  }
  return f1_from_counts(hits, np, nr);
}

struct LengthMetrics {
  double pct_too_long = 0.0;
  double avg_extra_chars = 0.0;
};

/// Percentage of predictions longer than their limit ("up to" is inclusive)
/// and mean overshoot in characters over all samples.
inline LengthMetrics length_metrics(std::span<const std::string> preds, std::span<const std::size_t> limits) {
  if (preds.size() != limits.size()) {
    throw InputError("length_metrics: " + std::to_string(preds.size()) + " predictions but " +
                     std::to_string(limits.size()) + " limits");
  }
  LengthMetrics m;
  if (preds.empty()) return m;
  std::size_t too_long = 0, extra = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::size_t len = utf8_length(preds[i]);
    if (len > limits[i]) {
      ++too_long;
      extra += len - limits[i];
    }
  }
  const double n = static_cast<double>(preds.size());
  m.pct_too_long = 100.0 * static_cast<double>(too_long) / n;
  m.avg_extra_chars = static_cast<double>(extra) / n;
  return m;
}

/// True when the last non-whitespace character is terminal punctuation or a
/// closing quote/paren.
inline bool ends_with_punctuation(std::string_view text) {
  const auto end = text.find_last_not_of(" \t\r\n");
  if (end == std::string_view::npos) return false;
  const std::string_view body = text.substr(0, end + 1);
  static constexpr std::string_view kEllipsis = "\xE2\x80\xA6";
  if (body.size() >= kEllipsis.size() && body.substr(body.size() - kEllipsis.size()) == kEllipsis) return true;
  switch (body.back()) {
    case '.':
    case '!':
    case '?':
    case '"':
    case '\'':
    case ')':
      return true;
    default:
      return false;
  }
}

/// Percentage of predictions that look cut off (no terminal punctuation).
inline double pct_cutoff(std::span<const std::string> preds) {
  if (preds.empty()) return 0.0;
  std::size_t cut = 0;
  for (const auto& p : preds) cut += !ends_with_punctuation(p);
  return 100.0 * static_cast<double>(cut) / static_cast<double>(preds.size());
}

struct MetricsReport {
  double rouge1 = 0, rouge2 = 0, rougeL = 0, rougeLsum = 0;
  double pct_too_long = 0, avg_extra_chars = 0, pct_cutoff = 0;
  std::size_t n_samples = 0;
};

/// Corpus-level report; ROUGE values are per-sample means scaled to [0, 100].
inline MetricsReport evaluate(std::span<const std::string> preds, std::span<const std::string> refs,
                              std::span<const std::size_t> limits) {
  if (preds.size() != refs.size()) {
    throw InputError("evaluate: " + std::to_string(preds.size()) + " predictions but " +
                     std::to_string(refs.size()) + " references");
  }
  MetricsReport r;
  r.n_samples = preds.size();
  const auto lm = length_metrics(preds, limits);
  r.pct_too_long = lm.pct_too_long;
  r.avg_extra_chars = lm.avg_extra_chars;
  r.pct_cutoff = pct_cutoff(preds);
  if (preds.empty()) return r;
  std::vector<double> r1, r2, rl, rls;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    r1.push_back(rouge_n(preds[i], refs[i], 1));
    r2.push_back(rouge_n(preds[i], refs[i], 2));
    rl.push_back(rouge_l(preds[i], refs[i]));
    rls.push_back(rouge_lsum(preds[i], refs[i]));
  }
  // Summing in sorted order makes the means independent of sample order.
  auto mean100 = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    double s = 0;
    for (double x : v) s += x;
    return 100.0 * s / static_cast<double>(v.size());
  };
  r.rouge1 = mean100(r1);
  r.rouge2 = mean100(r2);
  r.rougeL = mean100(rl);
  r.rougeLsum = mean100(rls);
  return r;
}

}  // namespace eosw
