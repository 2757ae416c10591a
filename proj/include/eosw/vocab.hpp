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
/// Character-level vocabulary and UTF-8 character counting.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eosw/error.hpp"

namespace eosw {

using TokenId = std::int32_t;

/// Number of Unicode code points in a UTF-8 string. Continuation bytes are
/// not counted, so malformed input still yields a finite count.
inline std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

/// Byte offset of the `chars`-th code point, or s.size() if past the end.
inline std::size_t utf8_offset(std::string_view s, std::size_t chars) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
      if (seen == chars) return i;
      ++seen;
    }
  }
  return s.size();
}

struct TokenSequence {
  std::vector<TokenId> ids;
  std::size_t char_len = 0;
};

/// Printable ASCII (0x20..0x7E) mapped from id 4 upward, after four reserved
/// special ids.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kFirstChar = 4;
  static constexpr char kMinChar = 0x20;
  static constexpr char kMaxChar = 0x7E;

  static constexpr std::size_t size() { return kFirstChar + (kMaxChar - kMinChar + 1); }

  static bool is_special(TokenId id) { return id >= 0 && id < kFirstChar; }

  static bool supports(char c) { return c >= kMinChar && c <= kMaxChar; }

  static TokenId id_of(char c) { return kFirstChar + (c - kMinChar); }

  static char char_of(TokenId id) {
    if (id < kFirstChar || static_cast<std::size_t>(id) >= size()) {
      throw IndexError("token id " + std::to_string(id) + " is not a character");
    }
    return static_cast<char>(kMinChar + (id - kFirstChar));
  }

  static TokenSequence encode(std::string_view text) {
    TokenSequence seq;
    seq.ids.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (!supports(text[i])) {
        throw EncodingError("unsupported character 0x" + hex_byte(text[i]) + " at offset " +
                            std::to_string(i));
      }
      seq.ids.push_back(id_of(text[i]));
    }
    seq.char_len = text.size();
    return seq;
  }

  /// Specials are skipped; ids past the vocabulary raise IndexError.
  static std::string decode(std::span<const TokenId> ids) {
    std::string out;
    out.reserve(ids.size());
    for (TokenId id : ids) {
      if (is_special(id)) continue;
      out.push_back(char_of(id));
    }
    return out;
  }

  /// Replaces unsupported bytes so external text can still be fed to the model.
  static std::string sanitize(std::string_view text, char replacement = ' ') {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
      const auto c = static_cast<unsigned char>(text[i]);
      if (c >= 0x80) {
        // one replacement per code point
        if ((c & 0xC0) != 0x80) out.push_back(replacement);
        continue;
      }
      out.push_back(supports(text[i]) ? text[i] : replacement);
    }
    return out;
  }

 private:
  static std::string hex_byte(char c) {
    static constexpr char kDigits[] = "0123456789ABCDEF";
    const auto u = static_cast<unsigned char>(c);
    return {kDigits[u >> 4], kDigits[u & 0xF]};
  }
};

}  // namespace eosw
