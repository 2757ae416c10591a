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
/// Synthetic summarization corpus, fixed/dynamic length dataset builders and
/// JSONL I/O.
///
/// A synthetic source is a list of short facts, some marked with a leading
/// '*'. The reference copies the marked facts in order and then a random
/// number (0..noise_items) of the following unmarked facts, so where a
/// summary ends is genuinely uncertain given the source.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "eosw/error.hpp"
#include "eosw/log.hpp"
#include "eosw/vocab.hpp"

namespace eosw {

struct Sample {
  std::string id;
  std::string source;
  std::string reference;
  std::optional<std::size_t> char_limit;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();  // unknown JSONL fields

  bool operator==(const Sample&) const = default;
};

struct CorpusConfig {
  std::size_t min_marked = 1;
  std::size_t max_marked = 30;
  std::size_t min_unmarked = 1;
  std::size_t max_unmarked = 12;
  /// Maximum number of unmarked facts appended to a reference.
  std::size_t noise_items = 2;
  /// tail_hazards[j]: probability of stopping after j appended facts, given
  /// j were appended. The last entry repeats; stopping is forced at noise_items.
  std::vector<double> tail_hazards = {0.05, 0.3};
  /// Place all marked facts before the unmarked ones instead of interleaving.
  bool marked_first = false;
  /// Draw tail facts uniformly from the unmarked facts instead of taking them in source order.
  bool shuffle_tail = false;
};

namespace detail {

inline constexpr std::array<std::string_view, 16> kAdjectives = {
    "red", "old", "big", "shy", "calm", "wild", "tiny", "brave",
    "quiet", "grey", "young", "lazy", "proud", "small", "happy", "cold"};
inline constexpr std::array<std::string_view, 16> kNouns = {
    "fox", "cat", "dog", "owl", "bee", "horse", "eagle", "mouse",
    "tiger", "whale", "goat", "crow", "bear", "frog", "lion", "duck"};
inline constexpr std::array<std::string_view, 16> kVerbs = {
    "ran", "sat", "hid", "slept", "sang", "swam", "jumped", "waited",
    "ate", "left", "won", "fell", "rested", "hunted", "danced", "called"};

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace detail

/// Generates `size` samples. Identical (seed, size, cfg) give identical output.
inline std::vector<Sample> gen_synthetic_corpus(std::uint64_t seed, std::size_t size, const CorpusConfig& cfg) {
  if (size == 0) throw RangeError("corpus size must be >= 1");
  if (cfg.min_marked == 0 || cfg.min_marked > cfg.max_marked || cfg.min_unmarked > cfg.max_unmarked) {
    throw RangeError("invalid fact-count ranges in corpus config");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t combos = detail::kAdjectives.size() * detail::kNouns.size() * detail::kVerbs.size();
  if (cfg.max_marked + cfg.max_unmarked > combos) throw RangeError("too many facts per source");

  std::vector<Sample> out;
  out.reserve(size);
  for (std::size_t s = 0; s < size; ++s) {
    const std::size_t n_marked = detail::uniform_index(rng, cfg.min_marked, cfg.max_marked);
    const std::size_t n_unmarked = detail::uniform_index(rng, cfg.min_unmarked, cfg.max_unmarked);
    const std::size_t total = n_marked + n_unmarked;

    // Distinct facts: draw distinct (adjective, noun, verb) codes.
    std::vector<std::size_t> codes;
    while (codes.size() < total) {
      const std::size_t c = detail::uniform_index(rng, 0, combos - 1);
      if (std::find(codes.begin(), codes.end(), c) == codes.end()) codes.push_back(c);
    }
    std::vector<std::string> facts;
    for (std::size_t c : codes) {
      const std::size_t a = c % detail::kAdjectives.size();
      const std::size_t n = (c / detail::kAdjectives.size()) % detail::kNouns.size();
      const std::size_t v = c / (detail::kAdjectives.size() * detail::kNouns.size());
      facts.push_back(std::string(detail::kAdjectives[a]) + " " + std::string(detail::kNouns[n]) + " " +
                      std::string(detail::kVerbs[v]) + ".");
    }

    std::vector<bool> marked(total, false);
    std::fill(marked.begin(), marked.begin() + static_cast<std::ptrdiff_t>(n_marked), true);
    if (!cfg.marked_first) std::shuffle(marked.begin(), marked.end(), rng);

    std::size_t tail = 0;
    const std::size_t cap = std::min(cfg.noise_items, n_unmarked);
    while (tail < cap) {
      const double h = cfg.tail_hazards.empty()
                           ? 0.0
                           : cfg.tail_hazards[std::min(tail, cfg.tail_hazards.size() - 1)];
      if (unit(rng) < h) break;
      ++tail;
    }

    Sample sample;
    sample.id = "syn-" + std::to_string(s);
    std::vector<std::string> ref_marked, ref_tail;
    std::vector<std::size_t> unmarked_idx;
    for (std::size_t i = 0; i < total; ++i) {
      if (!sample.source.empty()) sample.source += ' ';
      if (marked[i]) {
        sample.source += '*';
        ref_marked.push_back(facts[i]);
      } else {
        unmarked_idx.push_back(i);
      }
      sample.source += facts[i];
    }
    if (cfg.shuffle_tail) std::shuffle(unmarked_idx.begin(), unmarked_idx.end(), rng);
    for (std::size_t k = 0; k < tail; ++k) ref_tail.push_back(facts[unmarked_idx[k]]);
    for (const auto* part : {&ref_marked, &ref_tail}) {
      for (const auto& f : *part) {
        if (!sample.reference.empty()) sample.reference += ' ';
        sample.reference += f;
      }
    }
    out.push_back(std::move(sample));
  }
  return out;
}

inline std::vector<Sample> gen_synthetic_corpus(std::uint64_t seed, std::size_t size, std::size_t noise_items) {
  CorpusConfig cfg;
  cfg.noise_items = noise_items;
  return gen_synthetic_corpus(seed, size, cfg);
}

enum class Variant { kFixed, kDynamic };

struct DatasetSpec {
  Variant variant = Variant::kFixed;
  std::size_t fixed_char_limit = 250;
  std::size_t k_start = 50;
  std::size_t k_stop = 800;
  std::size_t k_step = 50;
  std::size_t train_size = 10000;
  std::size_t val_size = 500;
  std::size_t test_size = 500;
  std::uint64_t seed = 0;
  /// References with fewer sentences are discarded (1 keeps everything).
  std::size_t min_sentences = 1;

  void validate() const {
    if (variant == Variant::kFixed && fixed_char_limit == 0) throw RangeError("fixed_char_limit must be > 0");
    if (variant == Variant::kDynamic) {
      if (k_start == 0 || k_step == 0 || k_start > k_stop) {
        throw RangeError("invalid K grid: start " + std::to_string(k_start) + ", stop " + std::to_string(k_stop) +
                         ", step " + std::to_string(k_step));
      }
    }
  }
};

struct Dataset {
  std::vector<Sample> train, val, test;
  std::size_t dropped = 0;  // samples removed by length filters
};

/// Sentences: split after '.', '!' or '?' followed by whitespace, and on newlines.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    const auto b = cur.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) {
      const auto e = cur.find_last_not_of(" \t\r\n");
      out.push_back(cur.substr(b, e - b + 1));
    }
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      flush();
      continue;
    }
    cur.push_back(c);
    if ((c == '.' || c == '!' || c == '?') && i + 1 < text.size() &&
        (text[i + 1] == ' ' || text[i + 1] == '\t' || text[i + 1] == '\r' || text[i + 1] == '\n')) {
      flush();
    }
  }
  flush();
  return out;
}

inline std::string dynamic_prompt(std::size_t k) {
  return "Summarize with up to " + std::to_string(k) + " characters the following text:";
}

/// Smallest grid value >= length, or nullopt above the grid's top.
inline std::optional<std::size_t> round_up_to_grid(std::size_t length, std::size_t k_start, std::size_t k_stop,
                                                   std::size_t k_step) {
  std::size_t k = k_start;
  if (length > k_start) k = k_start + (length - k_start + k_step - 1) / k_step * k_step;
  if (k > k_stop) return std::nullopt;
  return k;
}

namespace detail {

inline Dataset split_dataset(std::vector<Sample> pool, const DatasetSpec& spec, std::size_t dropped) {
  const std::size_t need = spec.train_size + spec.val_size + spec.test_size;
  if (pool.size() < need) {
    throw InsufficientDataError("only " + std::to_string(pool.size()) + " samples survive filtering, " +
                                std::to_string(need) + " requested");
  }
  std::mt19937_64 rng(spec.seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  Dataset ds;
  ds.dropped = dropped;
  auto it = pool.begin();
  auto take = [&](std::size_t n, std::vector<Sample>& dst) {
    dst.assign(std::make_move_iterator(it), std::make_move_iterator(it + static_cast<std::ptrdiff_t>(n)));
    it += static_cast<std::ptrdiff_t>(n);
  };
  take(spec.train_size, ds.train);
  take(spec.val_size, ds.val);
  take(spec.test_size, ds.test);
  return ds;
}

inline bool enough_sentences(const Sample& s, std::size_t min_sentences) {
  return min_sentences <= 1 || split_sentences(s.reference).size() >= min_sentences;
}

}  // namespace detail

/// Keeps samples whose reference has at most `fixed_char_limit` characters.
inline Dataset build_fixed_length(const std::vector<Sample>& corpus, const DatasetSpec& spec) {
  spec.validate();
  std::vector<Sample> pool;
  for (const auto& s : corpus) {
    if (utf8_length(s.reference) <= spec.fixed_char_limit && detail::enough_sentences(s, spec.min_sentences)) {
      pool.push_back(s);
      pool.back().char_limit = spec.fixed_char_limit;
    }
  }
  const std::size_t dropped = corpus.size() - pool.size();
  return detail::split_dataset(std::move(pool), spec, dropped);
}

/// Assigns each sample the smallest grid K >= its reference length and
/// prepends the length instruction to the source. References longer than the
/// grid's top are dropped.
inline Dataset build_dynamic_length(const std::vector<Sample>& corpus, const DatasetSpec& spec) {
  spec.validate();
  std::vector<Sample> pool;
  std::size_t too_long = 0;
  for (const auto& s : corpus) {
    if (!detail::enough_sentences(s, spec.min_sentences)) continue;
    const auto k = round_up_to_grid(utf8_length(s.reference), spec.k_start, spec.k_stop, spec.k_step);
    if (!k) {
      ++too_long;
      continue;
    }
    Sample out = s;
    out.char_limit = *k;
    out.source = dynamic_prompt(*k) + " " + s.source;
    pool.push_back(std::move(out));
  }
  if (too_long > 0) {
    log::warn(std::to_string(too_long) + " references longer than K grid top " + std::to_string(spec.k_stop) +
              " dropped");
  }
  const std::size_t dropped = corpus.size() - pool.size();
  return detail::split_dataset(std::move(pool), spec, dropped);
}

inline Dataset build_dataset(const std::vector<Sample>& corpus, const DatasetSpec& spec) {
  return spec.variant == Variant::kFixed ? build_fixed_length(corpus, spec) : build_dynamic_length(corpus, spec);
}

// ---------------------------------------------------------------------------
// JSONL

inline nlohmann::ordered_json to_json(const Sample& s) {
  nlohmann::ordered_json j;
  if (!s.id.empty()) j["id"] = s.id;
  j["source"] = s.source;
  j["reference"] = s.reference;
  if (s.char_limit) j["char_limit"] = *s.char_limit;
  for (const auto& [k, v] : s.extra.items()) j[k] = v;
  return j;
}

/// Iterates non-empty lines of a JSONL file, tolerating CRLF endings.
template <typename Fn>
void for_each_jsonl_line(const std::string& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    nlohmann::ordered_json j;
    try {
      j = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) throw ParseError(path + ":" + std::to_string(line_no) + ": expected a JSON object");
    fn(j, line_no);
  }
}

inline std::vector<Sample> read_jsonl(const std::string& path, bool require_reference = true) {
  std::vector<Sample> out;
  for_each_jsonl_line(path, [&](nlohmann::ordered_json& j, std::size_t line_no) {
    auto fail = [&](const std::string& what) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + what);
    };
    Sample s;
    for (const auto& [k, v] : j.items()) {
      if (k == "id") {
        s.id = v.is_string() ? v.get<std::string>() : v.dump();
      } else if (k == "source") {
        if (!v.is_string()) fail("field 'source' must be a string");
        s.source = v.get<std::string>();
      } else if (k == "reference") {
        if (!v.is_string()) fail("field 'reference' must be a string");
        s.reference = v.get<std::string>();
      } else if (k == "char_limit") {
        if (!v.is_number_unsigned() || v.get<std::size_t>() == 0) fail("field 'char_limit' must be a positive integer");
        s.char_limit = v.get<std::size_t>();
      } else {
        s.extra[k] = v;
      }
    }
    if (!j.contains("source")) fail("missing field 'source'");
    if (require_reference && !j.contains("reference")) fail("missing field 'reference'");
    if (require_reference && s.reference.empty()) fail("field 'reference' is empty");
    out.push_back(std::move(s));
  });
  return out;
}

inline void write_jsonl(const std::string& path, const std::vector<Sample>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (const auto& s : samples) out << to_json(s).dump() << '\n';
}

}  // namespace eosw
