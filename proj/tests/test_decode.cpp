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


#include <gtest/gtest.h>

#include <random>

#include "eosw/decode.hpp"
#include "eosw/transformer.hpp"
#include "oracles.hpp"

namespace {

using eosw::BeamHypothesis;
using eosw::GenerationConfig;
using eosw::Strategy;
using eosw::TokenId;

// Logits depend only on the number of generated tokens.
class StaticModel {
 public:
  explicit StaticModel(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {}

  class State {
   public:
    State(const StaticModel* m, std::size_t prompt) : m_(m), prompt_(prompt) {}
    std::vector<double> log_probs() const {
      const auto& r = m_->rows_[std::min(step_, m_->rows_.size() - 1)];
      long double s = 0;
      for (double v : r) s += std::exp(static_cast<long double>(v));
      std::vector<double> out;
      for (double v : r) out.push_back(v - static_cast<double>(std::log(s)));
      return out;
    }
    void append(TokenId) { ++step_; }
    std::size_t room() const { return 1000; }

   private:
    const StaticModel* m_;
    std::size_t prompt_;
    std::size_t step_ = 0;
  };

  State start(std::span<const TokenId> prompt) const { return State(this, prompt.size()); }

 private:
  std::vector<std::vector<double>> rows_;
};

GenerationConfig greedy(std::size_t cap, TokenId eos) {
  GenerationConfig c;
  c.max_new_tokens = cap;
  c.eos_id = eos;
  return c;
}

GenerationConfig beam(std::size_t width, double lp, std::size_t cap, TokenId eos) {
  GenerationConfig c = greedy(cap, eos);
  c.strategy = Strategy::kBeam;
  c.num_beams = width;
  c.length_penalty = lp;
  return c;
}

std::vector<TokenId> random_prompt(std::mt19937_64& rng, std::size_t vocab) {
  std::uniform_int_distribution<TokenId> t(0, static_cast<TokenId>(vocab - 1));
  std::vector<TokenId> p(3);
  for (auto& x : p) x = t(rng);
  return p;
}

TEST(Greedy, EosFirstGivesEmptyContinuation) {
  StaticModel m({{0.0, 5.0, 1.0}});
  const std::vector<TokenId> prompt = {0};
  const auto h = eosw::greedy_decode(m, prompt, greedy(10, 1));
  EXPECT_EQ(h.ids.ids, (std::vector<TokenId>{1}));
  EXPECT_EQ(eosw::Vocab::decode(std::vector<TokenId>{eosw::Vocab::kEos}), "");
  EXPECT_TRUE(h.finished);
}

TEST(Greedy, FollowsStepwiseArgmax) {
  // EOS = 2. Step argmaxes: 1, 0, 0 (tie with 1 goes to lowest id), 2.
  StaticModel m({{0.1, 0.9, 0.2}, {3.0, 1.0, 2.0}, {1.5, 1.5, 0.0}, {0.0, 0.0, 4.0}});
  const std::vector<TokenId> prompt = {0, 1};
  const auto h = eosw::greedy_decode(m, prompt, greedy(10, 2));
  EXPECT_EQ(h.ids.ids, (std::vector<TokenId>{1, 0, 0, 2}));
  double expect = 0;
  const std::vector<std::vector<double>> rows = {{0.1, 0.9, 0.2}, {3.0, 1.0, 2.0}, {1.5, 1.5, 0.0}, {0.0, 0.0, 4.0}};
  const std::vector<int> picks = {1, 0, 0, 2};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<long double> x(rows[i].begin(), rows[i].end());
    expect += static_cast<double>(std::log(oracle::softmax(x)[static_cast<std::size_t>(picks[i])]));
  }
  EXPECT_NEAR(h.sum_logprob, expect, 1e-12);
  EXPECT_LE(h.sum_logprob, 0.0);
}

TEST(Greedy, Deterministic) {
  oracle::TableModel m(5, 3);
  const std::vector<TokenId> prompt = {1, 2};
  EXPECT_EQ(eosw::greedy_decode(m, prompt, greedy(12, 0)).ids.ids,
            eosw::greedy_decode(m, prompt, greedy(12, 0)).ids.ids);
}

TEST(BeamScore, Fixtures) {
  BeamHypothesis h;
  h.ids.ids = {5, 2};
  h.sum_logprob = -4.0;
  EXPECT_DOUBLE_EQ(eosw::beam_score(h, 0.0), -4.0);
  EXPECT_DOUBLE_EQ(eosw::beam_score(h, 1.0), -2.0);
  EXPECT_DOUBLE_EQ(eosw::beam_score(h, -1.0), -8.0);
  BeamHypothesis empty;
  EXPECT_THROW(eosw::beam_score(empty, 1.0), eosw::LengthError);
}

TEST(BeamScore, RankingMatchesRescoring) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> s(-20.0, 0.0);
  std::uniform_int_distribution<std::size_t> len(1, 30);
  for (double lp : {-1.0, 0.0, 1.0, 2.0}) {
    std::vector<BeamHypothesis> hs(40);
    for (auto& h : hs) {
      h.ids.ids.assign(len(rng), 4);
      h.sum_logprob = s(rng);
    }
    auto by_lib = hs;
    std::sort(by_lib.begin(), by_lib.end(),
              [&](const auto& a, const auto& b) { return eosw::beam_score(a, lp) > eosw::beam_score(b, lp); });
    auto by_oracle = hs;
    std::sort(by_oracle.begin(), by_oracle.end(), [&](const auto& a, const auto& b) {
      return a.sum_logprob * std::pow(1.0 / a.ids.ids.size(), lp) > b.sum_logprob * std::pow(1.0 / b.ids.ids.size(), lp);
    });
    for (std::size_t i = 0; i < hs.size(); ++i) EXPECT_EQ(by_lib[i].sum_logprob, by_oracle[i].sum_logprob);
  }
}

TEST(Beam, WidthOneEqualsGreedy) {
  std::mt19937_64 rng(7);
  oracle::TableModel m(6, 11);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_prompt(rng, 6);
    const auto g = eosw::greedy_decode(m, p, greedy(15, 0));
    const auto b = eosw::beam_search(m, p, beam(1, 0.0, 15, 0));
    EXPECT_EQ(g.ids.ids, b.ids.ids) << "prompt " << i;
  }
}

TEST(Beam, WidthOneEqualsGreedyOnTransformer) {
  eosw::ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_layers = 1;
  cfg.max_seq_len = 40;
  cfg.seed = 2;
  eosw::Transformer<float> m(cfg);
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto p = random_prompt(rng, eosw::Vocab::size());
    const auto g = eosw::greedy_decode(m, p, greedy(30, eosw::Vocab::kEos));
    const auto b = eosw::beam_search(m, p, beam(1, 0.0, 30, eosw::Vocab::kEos));
    EXPECT_EQ(g.ids.ids, b.ids.ids);
  }
}

TEST(Beam, FullWidthEqualsExhaustiveArgmax) {
  std::mt19937_64 rng(9);
  for (std::size_t vocab : {2u, 3u, 4u}) {
    for (std::size_t cap : {1u, 3u, 5u}) {
      const auto width = static_cast<std::size_t>(std::pow(vocab, cap));
      for (double lp : {-1.0, 0.0, 1.0}) {
        for (int trial = 0; trial < 4; ++trial) {
          oracle::TableModel m(vocab, rng());
          const auto p = random_prompt(rng, vocab);
          const auto all = oracle::enumerate(m, p, cap, 0);
          const auto best = oracle::exhaustive_best(all, lp);
          const auto got = eosw::beam_search(m, p, beam(width, lp, cap, 0));
          EXPECT_EQ(got.ids.ids, best.ids) << "vocab " << vocab << " cap " << cap << " lp " << lp;
          EXPECT_NEAR(got.sum_logprob, best.sum_logprob, 1e-12);
        }
      }
    }
  }
}

TEST(Beam, NeverWorseThanGreedyAtZeroPenalty) {
  std::mt19937_64 rng(10);
  for (int i = 0; i < 50; ++i) {
    oracle::TableModel m(5, rng());
    const auto p = random_prompt(rng, 5);
    const auto g = eosw::greedy_decode(m, p, greedy(8, 0));
    const auto b = eosw::beam_search(m, p, beam(3, 0.0, 8, 0));
    EXPECT_LE(g.sum_logprob, b.sum_logprob + 1e-12) << "prompt " << i;
  }
}

TEST(Beam, PositivePenaltyFavoursLength) {
  std::mt19937_64 rng(12);
  double len_pos = 0, len_neg = 0;
  for (int i = 0; i < 50; ++i) {
    oracle::TableModel m(5, rng());
    const auto p = random_prompt(rng, 5);
    len_pos += static_cast<double>(eosw::beam_search(m, p, beam(4, 1.0, 10, 0)).ids.ids.size());
    len_neg += static_cast<double>(eosw::beam_search(m, p, beam(4, -1.0, 10, 0)).ids.ids.size());
  }
  EXPECT_GE(len_pos, len_neg);
}

TEST(Decode, MaxNewTokensIsHardCap) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 30; ++i) {
    oracle::TableModel m(4, rng());
    const auto p = random_prompt(rng, 4);
    for (std::size_t cap : {1u, 2u, 6u}) {
      for (const auto& cfg : {greedy(cap, 0), beam(3, 1.0, cap, 0), beam(3, -1.0, cap, 0)}) {
        const auto h = eosw::generate(m, p, cfg);
        EXPECT_LE(h.ids.ids.size(), cap);
        EXPECT_TRUE(h.finished);
        EXPECT_TRUE(h.ids.ids.back() == 0 || h.ids.ids.size() == cap);
        EXPECT_LE(h.sum_logprob, 0.0);
      }
    }
  }
}

TEST(Decode, ContextRoomCapsGeneration) {
  oracle::TableModel m(4, 1, 5);
  auto cfg = greedy(100, 0);
  cfg.suppress_eos = true;
  const std::vector<TokenId> p = {1, 2};
  EXPECT_EQ(eosw::greedy_decode(m, p, cfg).ids.ids.size(), 4u);
}

TEST(Decode, SuppressionNeverEmitsEos) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 20; ++i) {
    oracle::TableModel m(3, rng());
    const auto p = random_prompt(rng, 3);
    for (auto cfg : {greedy(7, 0), beam(3, 0.0, 7, 0)}) {
      cfg.suppress_eos = true;
      const auto h = eosw::generate(m, p, cfg);
      EXPECT_EQ(h.ids.ids.size(), 7u);
      EXPECT_EQ(std::count(h.ids.ids.begin(), h.ids.ids.end(), 0), 0);
    }
  }
}

TEST(Decode, Validation) {
  oracle::TableModel m(3, 1);
  const std::vector<TokenId> p = {1};
  EXPECT_THROW(eosw::greedy_decode(m, p, greedy(0, 0)), eosw::RangeError);
  EXPECT_THROW(eosw::beam_search(m, p, beam(0, 0.0, 3, 0)), eosw::RangeError);
}

TEST(Truncate, Fixtures) {
  EXPECT_EQ(eosw::truncate_baseline("short", 250), "short");
  std::string text;
  for (int i = 0; i < 300; ++i) text += static_cast<char>('a' + i % 26);
  EXPECT_EQ(eosw::truncate_baseline(text, 250), text.substr(0, 250));
  EXPECT_EQ(eosw::truncate_baseline(text, 0), "");
}

TEST(Truncate, NeverSplitsMultibyteCharacters) {
  const std::vector<std::string> glyphs = {"a", "\xC3\xA9", "\xE2\x82\xAC", "\xF0\x9F\x98\x80"};
  std::mt19937_64 rng(15);
  std::uniform_int_distribution<std::size_t> pick(0, glyphs.size() - 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<std::string> chars(40);
    std::string text;
    for (auto& c : chars) text += (c = glyphs[pick(rng)]);
    for (std::size_t limit : {0u, 1u, 17u, 39u, 40u, 60u}) {
      std::string expect;
      for (std::size_t i = 0; i < std::min(limit, chars.size()); ++i) expect += chars[i];
      EXPECT_EQ(eosw::truncate_baseline(text, limit), expect);
    }
  }
}

TEST(Render, StripsSpecialsAndTruncates) {
  BeamHypothesis h;
  h.ids.ids = {eosw::Vocab::id_of('a'), eosw::Vocab::id_of('b'), eosw::Vocab::id_of('c'), eosw::Vocab::kEos};
  GenerationConfig cfg;
  EXPECT_EQ(eosw::render(h, cfg), "abc");
  cfg.truncate_at_chars = 2;
  EXPECT_EQ(eosw::render(h, cfg), "ab");
  EXPECT_EQ(cfg.label(), "greedy_trunc2");
}

}  // namespace
