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
/// Greedy decoding, beam search with length penalty, and the character
/// truncation baseline.
///
/// Decoders are generic over a step model: `m.start(prompt)` returns a
/// copyable state exposing `log_probs()`, `append(token)` and `room()`.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eosw/error.hpp"
#include "eosw/vocab.hpp"

namespace eosw {

template <typename S>
concept DecoderState = std::copy_constructible<S> && requires(S s, const S cs, TokenId t) {
  { cs.log_probs() } -> std::convertible_to<std::vector<double>>;
  { cs.room() } -> std::convertible_to<std::size_t>;
  s.append(t);
};

template <typename M>
concept StepModel = requires(const M& m, std::span<const TokenId> prompt) {
  { m.start(prompt) } -> DecoderState;
};

enum class Strategy { kGreedy, kBeam };

struct GenerationConfig {
  Strategy strategy = Strategy::kGreedy;
  std::size_t num_beams = 1;
  double length_penalty = 0.0;
  std::size_t max_new_tokens = 256;
  std::optional<std::size_t> truncate_at_chars;
  bool suppress_eos = false;
  TokenId eos_id = Vocab::kEos;

  void validate() const {
    if (max_new_tokens < 1) throw RangeError("max_new_tokens must be >= 1");
    if (strategy == Strategy::kBeam && num_beams < 1) throw RangeError("num_beams must be >= 1");
  }

  /// Short label used in reports, e.g. "greedy", "beam5_lp-1", "greedy_trunc250".
  std::string label() const {
    std::string s;
    if (strategy == Strategy::kGreedy) {
      s = "greedy";
    } else {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "beam%zu_lp%g", num_beams, length_penalty);
      s = buf;
    }
    if (truncate_at_chars) s += "_trunc" + std::to_string(*truncate_at_chars);
    if (suppress_eos) s += "_noeos";
    return s;
  }
};

struct BeamHypothesis {
  TokenSequence ids;  // generated tokens, including a final EOS when present
  double sum_logprob = 0.0;
  bool finished = false;
};

/// sum_logprob / len^lp with len counting generated tokens including EOS.
/// Positive lp favours longer hypotheses.
inline double beam_score(const BeamHypothesis& h, double length_penalty) {
  if (h.ids.ids.empty()) throw LengthError("beam_score: zero-length hypothesis");
  return h.sum_logprob / std::pow(static_cast<double>(h.ids.ids.size()), length_penalty);
}

namespace detail {

inline TokenSequence to_sequence(std::vector<TokenId> ids) {
  TokenSequence seq;
  seq.ids = std::move(ids);
  seq.char_len = 0;
  for (TokenId id : seq.ids) seq.char_len += !Vocab::is_special(id);
  return seq;
}

// Generation length cap given the model's remaining context.
template <typename S>
std::size_t effective_cap(const S& state, const GenerationConfig& cfg) {
  return std::min(cfg.max_new_tokens, state.room() + 1);
}

inline void apply_suppression(std::vector<double>& lp, const GenerationConfig& cfg) {
  if (!cfg.suppress_eos) return;
  if (cfg.eos_id < 0 || static_cast<std::size_t>(cfg.eos_id) >= lp.size()) return;
  // Renormalize the remaining mass.
  const double p_eos = std::exp(lp[cfg.eos_id]);
  lp[cfg.eos_id] = -std::numeric_limits<double>::infinity();
  if (p_eos < 1.0) {
    const double shift = std::log1p(-p_eos);
    for (auto& v : lp) v -= shift;
  }
}

}  // namespace detail

/// Argmax decoding (ties go to the lowest id). Stops at EOS or the length cap.
template <StepModel M>
BeamHypothesis greedy_decode(const M& model, std::span<const TokenId> prompt, const GenerationConfig& cfg) {
  cfg.validate();
  auto state = model.start(prompt);
  const std::size_t cap = detail::effective_cap(state, cfg);
  std::vector<TokenId> out;
  double sum = 0.0;
  while (out.size() < cap) {
    auto lp = state.log_probs();
    detail::apply_suppression(lp, cfg);
    std::size_t best = 0;
    for (std::size_t t = 1; t < lp.size(); ++t)
      if (lp[t] > lp[best]) best = t;
    const auto tok = static_cast<TokenId>(best);
    out.push_back(tok);
    sum += lp[best];
    if (tok == cfg.eos_id) break;
    if (out.size() < cap) state.append(tok);
  }
  return {detail::to_sequence(std::move(out)), sum, true};
}

/// Beam search keeping `num_beams` live hypotheses. Finished hypotheses move
/// to a done set; the search stops once no live hypothesis can beat the best
/// finished score, or at the length cap. Ties are broken towards the
/// lexicographically smallest token sequence.
template <StepModel M>
BeamHypothesis beam_search(const M& model, std::span<const TokenId> prompt, const GenerationConfig& cfg) {
  cfg.validate();
  using State = decltype(model.start(prompt));
  struct Live {
    std::vector<TokenId> ids;
    double sum;
    State state;
  };
  struct Candidate {
    double sum;
    std::size_t parent;
    TokenId token;
  };
  const double lp_exp = cfg.length_penalty;
  const std::size_t width = cfg.num_beams;

  std::vector<Live> live;
  live.push_back({{}, 0.0, model.start(prompt)});
  const std::size_t cap = detail::effective_cap(live.front().state, cfg);
  std::vector<BeamHypothesis> done;

  auto better_done = [&](const BeamHypothesis& a, const BeamHypothesis& b) {
    const double sa = beam_score(a, lp_exp), sb = beam_score(b, lp_exp);
    if (sa != sb) return sa > sb;
    return a.ids.ids < b.ids.ids;
  };
  auto add_done = [&](std::vector<TokenId> ids, double sum) {
    done.push_back({detail::to_sequence(std::move(ids)), sum, true});
    std::sort(done.begin(), done.end(), better_done);
    if (done.size() > width) done.resize(width);
  };

  for (std::size_t step = 1; step <= cap && !live.empty(); ++step) {
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < live.size(); ++b) {
      auto lp = live[b].state.log_probs();
      detail::apply_suppression(lp, cfg);
      for (std::size_t t = 0; t < lp.size(); ++t) {
        if (std::isinf(lp[t]) && lp[t] < 0) continue;
        cands.push_back({live[b].sum + lp[t], b, static_cast<TokenId>(t)});
      }
    }
    std::sort(cands.begin(), cands.end(), [&](const Candidate& a, const Candidate& b) {
      if (a.sum != b.sum) return a.sum > b.sum;
      const auto& pa = live[a.parent].ids;
      const auto& pb = live[b.parent].ids;
      // Compare pa+[a.token] with pb+[b.token]; both have the same length.
      const auto mm = std::mismatch(pa.begin(), pa.end(), pb.begin());
      if (mm.first != pa.end()) return *mm.first < *mm.second;
      return a.token < b.token;
    });

    std::vector<Live> next;
    std::size_t filled = 0;
    for (std::size_t rank = 0; rank < cands.size() && filled < width; ++rank) {
      const auto& c = cands[rank];
      std::vector<TokenId> ids = live[c.parent].ids;
      ids.push_back(c.token);
      if (c.token == cfg.eos_id) {
        if (rank < width) add_done(std::move(ids), c.sum);
        continue;
      }
      ++filled;
      if (step == cap) {
        add_done(std::move(ids), c.sum);  // finished by length
        continue;
      }
      State st = live[c.parent].state;
      st.append(c.token);
      next.push_back({std::move(ids), c.sum, std::move(st)});
    }
    if (step == cap) break;
    live = std::move(next);

    if (!done.empty()) {
      const double best = beam_score(done.front(), lp_exp);
      bool can_improve = false;
      for (const auto& l : live) {
        // Any completion has sum <= l.sum and length in [len+1, cap].
        const double len = lp_exp > 0 ? static_cast<double>(cap) : static_cast<double>(l.ids.size() + 1);
        if (l.sum / std::pow(len, lp_exp) > best) {
          can_improve = true;
          break;
        }
      }
      if (!can_improve) break;
    }
  }
  if (done.empty()) throw Error("beam_search: no finished hypothesis");
  return done.front();
}

/// First `limit` characters of `text` (code points, never splitting one).
inline std::string truncate_baseline(std::string_view text, std::size_t limit) {
  return std::string(text.substr(0, utf8_offset(text, limit)));
}

template <StepModel M>
BeamHypothesis generate(const M& model, std::span<const TokenId> prompt, const GenerationConfig& cfg) {
  if (cfg.strategy == Strategy::kBeam) return beam_search(model, prompt, cfg);
  return greedy_decode(model, prompt, cfg);
}

/// Generated text with specials stripped and the optional truncation applied.
inline std::string render(const BeamHypothesis& h, const GenerationConfig& cfg) {
  std::string text = Vocab::decode(h.ids.ids);
  if (cfg.truncate_at_chars) text = truncate_baseline(text, *cfg.truncate_at_chars);
  return text;
}

}  // namespace eosw
