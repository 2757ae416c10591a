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
/// JSON forms of the configuration structs and a stable config hash.

#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

#include <json.hpp>

#include "eosw/data.hpp"
#include "eosw/decode.hpp"
#include "eosw/loss.hpp"
#include "eosw/transformer.hpp"

namespace eosw {

using Json = nlohmann::ordered_json;

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const Json& j) { return fnv1a_hex(j.dump()); }

namespace detail {
template <typename V>
void read_opt(const Json& j, const char* key, V& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->template get<V>();
}
}  // namespace detail

inline Json to_json(const ModelConfig& c) {
  return Json{{"d_model", c.d_model},       {"n_heads", c.n_heads},
              {"n_layers", c.n_layers},     {"ff_mult", c.ff_mult},
              {"max_seq_len", c.max_seq_len}, {"vocab_size", c.vocab_size},
              {"dropout_rate", c.dropout_rate}, {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  detail::read_opt(j, "d_model", c.d_model);
  detail::read_opt(j, "n_heads", c.n_heads);
  detail::read_opt(j, "n_layers", c.n_layers);
  detail::read_opt(j, "ff_mult", c.ff_mult);
  detail::read_opt(j, "max_seq_len", c.max_seq_len);
  detail::read_opt(j, "vocab_size", c.vocab_size);
  detail::read_opt(j, "dropout_rate", c.dropout_rate);
  detail::read_opt(j, "seed", c.seed);
  return c;
}

inline Json to_json(const LossConfig& c) {
  return Json{{"eos_weight", c.eos_weight}, {"eos_token_id", c.eos_token_id}};
}

inline Json to_json(const GenerationConfig& c) {
  Json j{{"strategy", c.strategy == Strategy::kBeam ? "beam" : "greedy"},
         {"num_beams", c.num_beams},
         {"length_penalty", c.length_penalty},
         {"max_new_tokens", c.max_new_tokens},
         {"truncate_at_chars", nullptr},
         {"suppress_eos", c.suppress_eos}};
  if (c.truncate_at_chars) j["truncate_at_chars"] = *c.truncate_at_chars;
  return j;
}

inline GenerationConfig generation_config_from_json(const Json& j) {
  GenerationConfig c;
  std::string strategy = "greedy";
  detail::read_opt(j, "strategy", strategy);
  if (strategy == "beam") {
    c.strategy = Strategy::kBeam;
  } else if (strategy == "greedy") {
    c.strategy = Strategy::kGreedy;
  } else {
    throw ParseError("unknown decoding strategy '" + strategy + "'");
  }
  detail::read_opt(j, "num_beams", c.num_beams);
  detail::read_opt(j, "length_penalty", c.length_penalty);
  detail::read_opt(j, "max_new_tokens", c.max_new_tokens);
  if (auto it = j.find("truncate_at_chars"); it != j.end() && !it->is_null()) {
    c.truncate_at_chars = it->get<std::size_t>();
  }
  detail::read_opt(j, "suppress_eos", c.suppress_eos);
  c.validate();
  return c;
}

inline Json to_json(const CorpusConfig& c) {
  return Json{{"min_marked", c.min_marked},     {"max_marked", c.max_marked},
              {"min_unmarked", c.min_unmarked}, {"max_unmarked", c.max_unmarked},
              {"noise_items", c.noise_items},   {"tail_hazards", c.tail_hazards},
              {"marked_first", c.marked_first},   {"shuffle_tail", c.shuffle_tail}};
}

inline CorpusConfig corpus_config_from_json(const Json& j) {
  CorpusConfig c;
  detail::read_opt(j, "min_marked", c.min_marked);
  detail::read_opt(j, "max_marked", c.max_marked);
  detail::read_opt(j, "min_unmarked", c.min_unmarked);
  detail::read_opt(j, "max_unmarked", c.max_unmarked);
  detail::read_opt(j, "noise_items", c.noise_items);
  detail::read_opt(j, "tail_hazards", c.tail_hazards);
  detail::read_opt(j, "marked_first", c.marked_first);
  detail::read_opt(j, "shuffle_tail", c.shuffle_tail);
  return c;
}

inline Json to_json(const DatasetSpec& s) {
  return Json{{"variant", s.variant == Variant::kFixed ? "fixed" : "dynamic"},
              {"fixed_char_limit", s.fixed_char_limit},
              {"k_start", s.k_start},
              {"k_stop", s.k_stop},
              {"k_step", s.k_step},
              {"train_size", s.train_size},
              {"val_size", s.val_size},
              {"test_size", s.test_size},
              {"seed", s.seed},
              {"min_sentences", s.min_sentences}};
}

inline Variant parse_variant(const std::string& v) {
  if (v == "fixed") return Variant::kFixed;
  if (v == "dynamic") return Variant::kDynamic;
  throw ParseError("unknown dataset variant '" + v + "'");
}

inline DatasetSpec dataset_spec_from_json(const Json& j) {
  DatasetSpec s;
  std::string variant = "fixed";
  detail::read_opt(j, "variant", variant);
  s.variant = parse_variant(variant);
  detail::read_opt(j, "fixed_char_limit", s.fixed_char_limit);
  detail::read_opt(j, "k_start", s.k_start);
  detail::read_opt(j, "k_stop", s.k_stop);
  detail::read_opt(j, "k_step", s.k_step);
  detail::read_opt(j, "train_size", s.train_size);
  detail::read_opt(j, "val_size", s.val_size);
  detail::read_opt(j, "test_size", s.test_size);
  detail::read_opt(j, "seed", s.seed);
  detail::read_opt(j, "min_sentences", s.min_sentences);
  return s;
}

}  // namespace eosw
