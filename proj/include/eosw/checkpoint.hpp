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
/// Model snapshots and the on-disk checkpoint format.
///
/// File layout: the line "EOSWCKPT 1", one line of JSON header (model config,
/// vocabulary, parameter names and shapes, training metadata), then every
/// parameter as little-endian float64 in header order.

#pragma once

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "eosw/config.hpp"
#include "eosw/transformer.hpp"

namespace eosw {

inline constexpr const char* kCheckpointMagic = "EOSWCKPT";
inline constexpr int kCheckpointVersion = 1;

template <typename T>
struct Checkpoint {
  std::size_t step = 0;
  double val_loss = std::numeric_limits<double>::infinity();
  ModelConfig model;
  std::vector<std::string> names;
  std::vector<Shape> shapes;
  std::vector<std::vector<T>> values;
  Json metadata = Json::object();  // config hashes and anything else the caller records
};

template <typename T>
Checkpoint<T> snapshot(const Transformer<T>& model, std::size_t step, double val_loss, Json metadata = Json::object()) {
  Checkpoint<T> c;
  c.step = step;
  c.val_loss = val_loss;
  c.model = model.config();
  c.metadata = std::move(metadata);
  for (const auto& p : model.parameters()) {
    c.names.push_back(p.name);
    c.shapes.push_back(p.tensor.shape());
    c.values.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  }
  return c;
}

template <typename T>
void restore(Transformer<T>& model, const Checkpoint<T>& c) {
  auto& params = model.parameters();
  if (params.size() != c.values.size()) throw DimensionError("checkpoint parameter count does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != c.names[i] || params[i].tensor.shape() != c.shapes[i]) {
      throw DimensionError("checkpoint parameter '" + c.names[i] + "' does not match model parameter '" +
                           params[i].name + "'");
    }
    std::copy(c.values[i].begin(), c.values[i].end(), params[i].tensor.mutable_data().begin());
  }
}

inline Json vocab_json() {
  std::string charset;
  for (char ch = Vocab::kMinChar; ch <= Vocab::kMaxChar; ++ch) charset.push_back(ch);
  return Json{{"pad", Vocab::kPad},
              {"bos", Vocab::kBos},
              {"eos", Vocab::kEos},
              {"sep", Vocab::kSep},
              {"first_char", Vocab::kFirstChar},
              {"charset", charset}};
}

template <typename T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& c) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian");
  Json header{{"format_version", kCheckpointVersion},
              {"model_config", to_json(c.model)},
              {"vocab", vocab_json()},
              {"step", c.step},
              {"val_loss", std::isfinite(c.val_loss) ? Json(c.val_loss) : Json(nullptr)},
              {"dtype", "float64"},
              {"metadata", c.metadata},
              {"params", Json::array()}};
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    header["params"].push_back(Json{{"name", c.names[i]}, {"shape", c.shapes[i]}});
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path);
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n' << header.dump() << '\n';
  for (const auto& v : c.values) {
    for (T x : v) {
      const double d = static_cast<double>(x);
      out.write(reinterpret_cast<const char*>(&d), sizeof(d));
    }
  }
  if (!out) throw Error("failed writing checkpoint " + path);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path);
  std::string magic_line, header_line;
  std::getline(in, magic_line);
  if (magic_line != std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion)) {
    throw ParseError(path + ": not a version " + std::to_string(kCheckpointVersion) + " checkpoint");
  }
  std::getline(in, header_line);
  Json h;
  try {
    h = Json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": bad checkpoint header: " + e.what());
  }
  if (h.at("vocab") != vocab_json()) throw ParseError(path + ": checkpoint vocabulary differs from this build");
  Checkpoint<T> c;
  c.model = model_config_from_json(h.at("model_config"));
  c.step = h.at("step").get<std::size_t>();
  c.val_loss = h.at("val_loss").is_null() ? std::numeric_limits<double>::infinity() : h.at("val_loss").get<double>();
  c.metadata = h.value("metadata", Json::object());
  for (const auto& p : h.at("params")) {
    c.names.push_back(p.at("name").get<std::string>());
    c.shapes.push_back(p.at("shape").get<Shape>());
    std::vector<T> v(numel(c.shapes.back()));
    for (auto& x : v) {
      double d;
      if (!in.read(reinterpret_cast<char*>(&d), sizeof(d))) throw ParseError(path + ": truncated parameter data");
      x = static_cast<T>(d);
    }
    c.values.push_back(std::move(v));
  }
  return c;
}

/// Builds a model from a checkpoint file.
template <typename T>
Transformer<T> load_model(const std::string& path, Checkpoint<T>* out_checkpoint = nullptr) {
  auto c = load_checkpoint<T>(path);
  Transformer<T> model(c.model);
  restore(model, c);
  if (out_checkpoint) *out_checkpoint = std::move(c);
  return model;
}

}  // namespace eosw
