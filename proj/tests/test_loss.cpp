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

#include <cmath>
#include <numeric>
#include <random>

#include "eosw/log.hpp"
#include "eosw/loss.hpp"
#include "eosw/ops.hpp"
#include "oracles.hpp"

namespace {

using eosw::LossConfig;
using eosw::TokenId;
constexpr TokenId kEos = eosw::Vocab::kEos;

struct Instance {
  std::vector<double> logits;
  std::vector<TokenId> targets;
  std::size_t v;
};

// Random logits and targets with exactly one EOS, placed last.
Instance random_instance(std::mt19937_64& rng, std::size_t max_n, std::size_t v = 12) {
  std::uniform_int_distribution<std::size_t> nd(1, max_n);
  std::uniform_int_distribution<TokenId> td(eosw::Vocab::kFirstChar, static_cast<TokenId>(v - 1));
  std::normal_distribution<double> ld(0.0, 3.0);
  Instance in;
  in.v = v;
  const std::size_t n = nd(rng);
  for (std::size_t i = 0; i + 1 < n; ++i) in.targets.push_back(td(rng));
  in.targets.push_back(kEos);
  in.logits.resize(n * v);
  for (auto& x : in.logits) x = ld(rng);
  return in;
}

TEST(RescaleFactor, Fixtures) {
  EXPECT_NEAR(eosw::rescale_factor(10, 10), 10.0 / 19.0, 1e-15);
  EXPECT_NEAR(eosw::rescale_factor(10, 10), 0.52632, 1e-5);
  for (std::size_t n : {1, 2, 17, 512}) EXPECT_EQ(eosw::rescale_factor(n, 1.0), 1.0);
  EXPECT_NEAR(eosw::rescale_factor(1, 1000), 1.0 / 1000.0, 1e-18);
  EXPECT_THROW(eosw::rescale_factor(0, 10), eosw::LengthError);
  EXPECT_THROW(eosw::rescale_factor(3, 0.5), eosw::RangeError);
}

TEST(EffectiveWeights, Fixtures) {
  const TokenId a = eosw::Vocab::id_of('a'), b = eosw::Vocab::id_of('b');
  const std::vector<TokenId> t1 = {a, b, kEos};
  const auto w1 = eosw::effective_weights(t1, LossConfig{10.0});
  ASSERT_EQ(w1.size(), 3u);
  EXPECT_NEAR(w1[0], 1.0 / 12, 1e-15);
  EXPECT_NEAR(w1[1], 1.0 / 12, 1e-15);
  EXPECT_NEAR(w1[2], 10.0 / 12, 1e-15);
  EXPECT_NEAR(w1[0] + w1[1] + w1[2], 1.0, 1e-15);

  const std::vector<TokenId> t2 = {a, kEos};
  const auto w2 = eosw::effective_weights(t2, LossConfig{1.0});
  EXPECT_DOUBLE_EQ(w2[0], 0.5);
  EXPECT_DOUBLE_EQ(w2[1], 0.5);
}

TEST(EffectiveWeights, SumToOneWithOneEos) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> wd(1.0, 1000.0);
  for (int t = 0; t < 1000; ++t) {
    auto in = random_instance(rng, 512);
    std::shuffle(in.targets.begin(), in.targets.end(), rng);
    const auto c = eosw::effective_weights(in.targets, LossConfig{wd(rng)});
    EXPECT_NEAR(std::accumulate(c.begin(), c.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(EffectiveWeights, MaskExcludesSourcePositions) {
  const TokenId x = eosw::Vocab::id_of('x');
  const std::vector<TokenId> targets = {x, x, x, x, kEos};
  const std::vector<bool> mask = {false, false, true, true, true};
  const auto c = eosw::effective_weights(targets, mask, LossConfig{10.0});
  // N = 3 target positions; R = 3 / 12.
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_NEAR(c[2], 1.0 / 12, 1e-15);
  EXPECT_NEAR(c[3], 1.0 / 12, 1e-15);
  EXPECT_NEAR(c[4], 10.0 / 12, 1e-15);
}

TEST(EffectiveWeights, OnlyEosPositionsAreUpweighted) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    auto in = random_instance(rng, 40);
    const double w = 1.0 + 999.0 * std::uniform_real_distribution<double>(0, 1)(rng);
    const auto c = eosw::effective_weights(in.targets, LossConfig{w});
    const double base = eosw::rescale_factor(in.targets.size(), w) / static_cast<double>(in.targets.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_NEAR(c[i], in.targets[i] == kEos ? w * base : base, 1e-15);
    }
  }
}

TEST(EffectiveWeights, NoEosFallsBackToPlainMeanWithWarning) {
  const TokenId a = eosw::Vocab::id_of('a');
  const std::vector<TokenId> targets = {a, a, a, a};
  const auto before = eosw::log::warnings();
  eosw::log::set_level(eosw::log::Level::kError);
  const auto c = eosw::effective_weights(targets, LossConfig{50.0});
  eosw::log::set_level(eosw::log::Level::kInfo);
  EXPECT_GT(eosw::log::warnings(), before);
  for (double v : c) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(WeightedCE, ConstructedLossesGive21Over11) {
  // Two-token vocabulary: id 0 = 'a', id 1 = EOS. Row logits [z, 0] with
  // target 0 give NLL log(1 + e^-z); invert for NLL 1 and 2.
  const double z1 = -std::log(std::exp(1.0) - 1.0);
  const double z2 = -std::log(std::exp(2.0) - 1.0);
  eosw::Tensor<double> logits({2, 2}, {z1, 0.0, 0.0, z2}, true);
  const std::vector<TokenId> targets = {0, 1};
  LossConfig cfg{10.0, 1};
  const long double l1_row0 = oracle::nll(std::span<const double>(logits.data()).subspan(0, 2), 0);
  const long double l1_row1 = oracle::nll(std::span<const double>(logits.data()).subspan(2, 2), 1);
  ASSERT_NEAR(static_cast<double>(l1_row0), 1.0, 1e-12);
  ASSERT_NEAR(static_cast<double>(l1_row1), 2.0, 1e-12);
  const double l2 = eosw::weighted_ce(logits, targets, cfg).item();
  EXPECT_NEAR(l2, 21.0 / 11.0, 1e-12);
  EXPECT_NEAR(l2, 1.9091, 1e-4);
  const double l1 = eosw::weighted_ce(logits, targets, LossConfig{1.0, 1}).item();
  EXPECT_NEAR(l1, 1.5, 1e-12);
}

TEST(WeightedCE, UniformLogitsGiveSameLossForEveryW) {
  const std::size_t v = 10, n = 6;
  std::vector<double> row = {0.3, -1.0, 0.7, 0.5, 0.1, 0.7, 1.2, 0.0, 2.0, -2.0};
  std::vector<double> data;
  for (std::size_t i = 0; i < n; ++i) data.insert(data.end(), row.begin(), row.end());
  eosw::Tensor<double> logits({n, v}, data, false);
  // Token 5 and EOS share a logit, so every position has the same CE.
  std::vector<TokenId> targets(n, 5);
  targets.back() = kEos;
  const double l1 = eosw::weighted_ce(logits, targets, LossConfig{1.0}).item();
  for (double w : {1.0, 10.0, 100.0, 1000.0}) {
    EXPECT_NEAR(eosw::weighted_ce(logits, targets, LossConfig{w}).item(), l1, 1e-12);
  }
}

TEST(WeightedCE, DegeneratesToMeanCrossEntropyAtWOne) {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 100; ++t) {
    auto in = random_instance(rng, 64);
    const std::size_t n = in.targets.size();
    eosw::Tensor<double> ld({n, in.v}, in.logits, false);
    const long double ref = oracle::mean_ce(in.logits, in.v, in.targets);
    EXPECT_NEAR(eosw::weighted_ce(ld, in.targets, LossConfig{1.0}).item(), static_cast<double>(ref), 1e-12);

    std::vector<float> lf(in.logits.begin(), in.logits.end());
    std::vector<double> lf_back(lf.begin(), lf.end());
    eosw::Tensor<float> tf({n, in.v}, lf, false);
    const long double ref_f = oracle::mean_ce(lf_back, in.v, in.targets);
    EXPECT_NEAR(eosw::weighted_ce(tf, in.targets, LossConfig{1.0}).item(), static_cast<double>(ref_f), 1e-6);
  }
}

TEST(WeightedCE, MatchesDefinitionForAllW) {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    auto in = random_instance(rng, 30);
    eosw::Tensor<double> ld({in.targets.size(), in.v}, in.logits, false);
    for (double w : {1.0, 3.5, 10.0, 100.0, 1000.0}) {
      const long double ref = oracle::weighted_ce(in.logits, in.v, in.targets, w, kEos);
      EXPECT_NEAR(eosw::weighted_ce(ld, in.targets, LossConfig{w}).item(), static_cast<double>(ref), 1e-11);
    }
  }
}

TEST(WeightedCE, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(2024);
  const double ws[] = {1.0, 10.0, 100.0, 1000.0};
  for (int t = 0; t < 100; ++t) {
    auto in = random_instance(rng, 8, 7);
    eosw::Tensor<double> x({in.targets.size(), in.v}, in.logits, true);
    const LossConfig cfg{ws[t % 4]};
    EXPECT_LT(oracle::gradcheck(x, [&] { return eosw::weighted_ce(x, in.targets, cfg); }), 1e-4)
        << "instance " << t << " W=" << cfg.eos_weight;
  }
}

TEST(WeightedCE, EosSensitivityIncreasesWithW) {
  // dL/d(NLL at the EOS position) equals the EOS coefficient W / (N + W - 1).
  const TokenId a = eosw::Vocab::id_of('a');
  for (std::size_t n : {2, 5, 64}) {
    std::vector<TokenId> targets(n - 1, a);
    targets.push_back(kEos);
    double prev = -1.0;
    for (double w : {1.0, 1.5, 10.0, 100.0, 1000.0}) {
      const double c = eosw::effective_weights(targets, LossConfig{w}).back();
      EXPECT_NEAR(c, w / (static_cast<double>(n) + w - 1.0), 1e-15);
      EXPECT_GT(c, prev);
      prev = c;
    }
  }
}

TEST(WeightedCE, Errors) {
  eosw::Tensor<double> logits({2, 4}, std::vector<double>(8, 0.0), false);
  const std::vector<TokenId> bad = {1, 9};
  EXPECT_THROW(eosw::weighted_ce(logits, bad, LossConfig{}), eosw::IndexError);
  eosw::Tensor<double> nan_logits({1, 4}, {0, std::nan(""), 0, 0}, false);
  const std::vector<TokenId> one = {2};
  EXPECT_THROW(eosw::weighted_ce(nan_logits, one, LossConfig{}), eosw::NumericError);
  const std::vector<TokenId> three = {2, 2, 2};
  EXPECT_THROW(eosw::weighted_ce(logits, three, LossConfig{}), eosw::DimensionError);
  EXPECT_THROW(LossConfig{0.5}.validate(), eosw::RangeError);
}

TEST(BatchWeightedCE, IsMeanOfPerSequenceLosses) {
  std::mt19937_64 rng(31);
  std::vector<Instance> seqs;
  std::vector<double> packed;
  for (int i = 0; i < 5; ++i) {
    seqs.push_back(random_instance(rng, 20));
    packed.insert(packed.end(), seqs.back().logits.begin(), seqs.back().logits.end());
  }
  const std::size_t v = seqs[0].v;
  std::vector<eosw::MaskedTargets> batch;
  double mean = 0;
  for (const auto& s : seqs) {
    batch.push_back({s.targets, nullptr});
    eosw::Tensor<double> l({s.targets.size(), v}, s.logits, false);
    mean += eosw::weighted_ce(l, s.targets, LossConfig{10.0}).item() / static_cast<double>(seqs.size());
  }
  eosw::Tensor<double> all({packed.size() / v, v}, packed, false);
  EXPECT_NEAR(eosw::batch_weighted_ce(all, std::span<const eosw::MaskedTargets>(batch), LossConfig{10.0}).item(), mean,
              1e-12);
}

}  // namespace
