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

#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace eosw::log {

enum class Level { kDebug = 0, kInfo = 1, kWarn = 2, kError = 3, kOff = 4 };

namespace detail {
inline std::atomic<int> min_level{static_cast<int>(Level::kInfo)};
inline std::atomic<std::size_t> warning_count{0};
inline std::mutex sink_mutex;
}  // namespace detail

inline void set_level(Level level) { detail::min_level = static_cast<int>(level); }

/// Warnings emitted since process start, including suppressed ones.
inline std::size_t warnings() { return detail::warning_count.load(); }

inline void write(Level level, std::string_view tag, std::string_view msg) {
  if (static_cast<int>(level) < detail::min_level.load()) return;
  std::lock_guard<std::mutex> lock(detail::sink_mutex);
  std::cerr << '[' << tag << "] " << msg << '\n';
}

inline void debug(std::string_view msg) { write(Level::kDebug, "debug", msg); }
inline void info(std::string_view msg) { write(Level::kInfo, "info", msg); }
inline void warn(std::string_view msg) {
  ++detail::warning_count;
  write(Level::kWarn, "warn", msg);
}
inline void error(std::string_view msg) { write(Level::kError, "error", msg); }

}  // namespace eosw::log
