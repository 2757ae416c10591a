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
/// Experiment driver: dataset files, prediction files, evaluation with id
/// alignment, the EOS-weight ablation grid and its CSV/markdown reports.
///
/// Ablation output directory:
///   plan.json                       the full plan and its hash
///   w<W>/                           training run directory (see train.hpp)
///   w<W>/predictions/<decode>.jsonl one prediction per test sample
///   report.csv                      one row per (W, decode) cell
///   histograms.csv                  generated-length histograms per cell

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eosw/checkpoint.hpp"
#include "eosw/config.hpp"
#include "eosw/data.hpp"
#include "eosw/decode.hpp"
#include "eosw/error.hpp"
#include "eosw/log.hpp"
#include "eosw/loss.hpp"
#include "eosw/metrics.hpp"
#include "eosw/train.hpp"
#include "eosw/transformer.hpp"

namespace eosw {

inline constexpr int kReportSchemaVersion = 1;

/// Where the synthetic corpus comes from. corpus_size 0 means twice the
/// number of samples the splits request.
struct CorpusSource {
  CorpusConfig config;
  std::size_t corpus_size = 0;
  std::uint64_t corpus_seed = 0;
};

inline Json to_json(const CorpusSource& c) {
  return Json{{"corpus", to_json(c.config)}, {"corpus_size", c.corpus_size}, {"corpus_seed", c.corpus_seed}};
}

inline CorpusSource corpus_source_from_json(const Json& j) {
  CorpusSource c;
  if (auto it = j.find("corpus"); it != j.end()) c.config = corpus_config_from_json(*it);
  detail::read_opt(j, "corpus_size", c.corpus_size);
  detail::read_opt(j, "corpus_seed", c.corpus_seed);
  return c;
}

inline std::size_t resolved_corpus_size(const CorpusSource& c, const DatasetSpec& spec) {
  return c.corpus_size > 0 ? c.corpus_size : 2 * (spec.train_size + spec.val_size + spec.test_size);
}

inline Dataset make_synthetic_dataset(const CorpusSource& src, const DatasetSpec& spec) {
  const auto corpus = gen_synthetic_corpus(src.corpus_seed, resolved_corpus_size(src, spec), src.config);
  return build_dataset(corpus, spec);
}

/// Writes train.jsonl, val.jsonl and test.jsonl into `dir`.
inline void write_dataset(const std::string& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_jsonl((fs::path(dir) / "train.jsonl").string(), ds.train);
  write_jsonl((fs::path(dir) / "val.jsonl").string(), ds.val);
  write_jsonl((fs::path(dir) / "test.jsonl").string(), ds.test);
}

inline Dataset read_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.train = read_jsonl((fs::path(dir) / "train.jsonl").string());
  ds.val = read_jsonl((fs::path(dir) / "val.jsonl").string());
  ds.test = read_jsonl((fs::path(dir) / "test.jsonl").string());
  return ds;
}

/// Character limit of a sample, falling back to `fallback` when absent.
inline std::size_t sample_limit(const Sample& s, std::optional<std::size_t> fallback) {
  if (s.char_limit) return *s.char_limit;
  if (fallback) return *fallback;
  throw InputError("sample '" + s.id + "' has no char_limit and no default limit was given");
}

/// Decodes every sample's source with `model`.
template <typename T>
std::vector<std::string> generate_texts(const Transformer<T>& model, std::span<const Sample> samples,
                                        const GenerationConfig& cfg) {
  std::vector<std::string> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto src = Vocab::encode(Vocab::sanitize(s.source));
    const auto prompt = make_prompt(src.ids);
    out.push_back(render(generate(model, prompt, cfg), cfg));
  }
  return out;
}

inline void write_predictions(const std::string& path, std::span<const Sample> samples,
                              std::span<const std::string> preds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Json j{{"id", samples[i].id}, {"prediction", preds[i]}};
    if (samples[i].char_limit) j["char_limit"] = *samples[i].char_limit;
    out << j.dump() << '\n';
  }
}

/// id -> prediction, in file order.
inline std::vector<std::pair<std::string, std::string>> read_predictions(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> out;
  for_each_jsonl_line(path, [&](Json& j, std::size_t line_no) {
    auto fail = [&](const std::string& what) { throw ParseError(path + ":" + std::to_string(line_no) + ": " + what); };
    if (!j.contains("id")) fail("missing field 'id'");
    if (!j.contains("prediction") || !j["prediction"].is_string()) fail("missing string field 'prediction'");
    const auto& id = j["id"];
    out.emplace_back(id.is_string() ? id.get<std::string>() : id.dump(), j["prediction"].get<std::string>());
  });
  return out;
}

/// Pairs predictions with references by id. Throws AlignmentError naming
/// the ids present on one side only.
inline MetricsReport evaluate_aligned(const std::vector<std::pair<std::string, std::string>>& preds,
                                      const std::vector<Sample>& refs, std::optional<std::size_t> default_limit) {
  std::map<std::string, std::string> by_id;
  for (const auto& [id, p] : preds) {
    if (!by_id.emplace(id, p).second) throw AlignmentError("duplicate prediction id '" + id + "'");
  }
  std::set<std::string> ref_ids;
  std::vector<std::string> missing, extra;
  std::vector<std::string> p_out, r_out;
  std::vector<std::size_t> limits;
  for (const auto& r : refs) {
    if (!ref_ids.insert(r.id).second) throw AlignmentError("duplicate reference id '" + r.id + "'");
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      missing.push_back(r.id);
      continue;
    }
    p_out.push_back(it->second);
    r_out.push_back(r.reference);
    limits.push_back(sample_limit(r, default_limit));
  }
  for (const auto& [id, p] : by_id) {
    if (!ref_ids.count(id)) extra.push_back(id);
  }
  if (!missing.empty() || !extra.empty()) {
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (std::size_t i = 0; i < v.size() && i < 20; ++i) s += (i ? ", " : "") + v[i];
      if (v.size() > 20) s += ", ... (" + std::to_string(v.size()) + " total)";
      return s;
    };
    std::string msg = "predictions and references do not align.";
    if (!missing.empty()) msg += " Missing predictions for: " + join(missing) + ".";
    if (!extra.empty()) msg += " Predictions without reference: " + join(extra) + ".";
    throw AlignmentError(msg);
  }
  return evaluate(p_out, r_out, limits);
}

inline Json to_json(const MetricsReport& r) {
  return Json{{"rouge1", r.rouge1},
              {"rouge2", r.rouge2},
              {"rougeL", r.rougeL},
              {"rougeLsum", r.rougeLsum},
              {"pct_too_long", r.pct_too_long},
              {"avg_extra_chars", r.avg_extra_chars},
              {"pct_cutoff", r.pct_cutoff},
              {"n_samples", r.n_samples}};
}

// ---------------------------------------------------------------------------
// Ablation

struct ExperimentPlan {
  DatasetSpec dataset;
  CorpusSource corpus;
  std::optional<std::string> data_dir;  // read JSONL splits instead of generating
  ModelConfig model;
  TrainConfig train;
  std::vector<double> eos_weights = {1.0, 10.0, 100.0};
  std::vector<GenerationConfig> decodes = {GenerationConfig{}};
  std::string output_dir = "runs/ablation";
  bool with_baseline = false;
  std::size_t hist_bin_width = 10;

  /// W values in run order, with W = 1 prepended when with_baseline is set.
  std::vector<double> resolved_weights() const {
    std::vector<double> w = eos_weights;
    if (with_baseline && std::find(w.begin(), w.end(), 1.0) == w.end()) w.insert(w.begin(), 1.0);
    return w;
  }

  void validate() const {
    if (resolved_weights().empty()) throw RangeError("plan needs at least one EOS weight");
    for (double w : resolved_weights()) LossConfig{w}.validate();
    if (decodes.empty()) throw RangeError("plan needs at least one decoding configuration");
    for (const auto& d : decodes) d.validate();
    std::set<std::string> labels;
    for (const auto& d : decodes) {
      if (!labels.insert(d.label()).second) throw RangeError("duplicate decoding configuration '" + d.label() + "'");
    }
    if (hist_bin_width == 0) throw RangeError("hist_bin_width must be >= 1");
    model.validate();
    train.validate();
    dataset.validate();
  }
};

inline Json to_json(const ExperimentPlan& p) {
  Json decodes = Json::array();
  for (const auto& d : p.decodes) decodes.push_back(to_json(d));
  return Json{{"dataset", to_json(p.dataset)},
              {"corpus", to_json(p.corpus)},
              {"data_dir", p.data_dir ? Json(*p.data_dir) : Json(nullptr)},
              {"model", to_json(p.model)},
              {"train", to_json(p.train)},
              {"eos_weights", p.eos_weights},
              {"decodes", decodes},
              {"output_dir", p.output_dir},
              {"with_baseline", p.with_baseline},
              {"hist_bin_width", p.hist_bin_width}};
}

inline ExperimentPlan plan_from_json(const Json& j) {
  ExperimentPlan p;
  if (auto it = j.find("dataset"); it != j.end()) p.dataset = dataset_spec_from_json(*it);
  if (auto it = j.find("corpus"); it != j.end()) p.corpus = corpus_source_from_json(*it);
  if (auto it = j.find("data_dir"); it != j.end() && !it->is_null()) p.data_dir = it->get<std::string>();
  if (auto it = j.find("model"); it != j.end()) p.model = model_config_from_json(*it);
  if (auto it = j.find("train"); it != j.end()) p.train = train_config_from_json(*it);
  detail::read_opt(j, "eos_weights", p.eos_weights);
  if (auto it = j.find("decodes"); it != j.end()) {
    p.decodes.clear();
    for (const auto& d : *it) p.decodes.push_back(generation_config_from_json(d));
  }
  detail::read_opt(j, "output_dir", p.output_dir);
  detail::read_opt(j, "with_baseline", p.with_baseline);
  detail::read_opt(j, "hist_bin_width", p.hist_bin_width);
  return p;
}

inline std::string weight_label(double w) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", w);
  return buf;
}

struct ReportRow {
  double w = 1.0;
  std::string decode;
  MetricsReport metrics;
  double mean_gen_chars = 0.0;
  std::string status = "ok";
  std::string config_hash;
  std::uint64_t seed = 0;
};

struct HistogramRow {
  double w = 1.0;
  std::string decode;
  std::size_t bin_lo = 0, bin_hi = 0;  // [lo, hi)
  std::size_t count = 0;
};

struct AblationResult {
  std::vector<ReportRow> rows;
  std::vector<HistogramRow> histograms;
  bool any_diverged = false;
  bool any_failed = false;
  std::map<double, double> train_seconds;  // wall clock per W, not written to reports
};

inline const char* kReportHeader =
    "schema_version,w,decode,rouge1,rouge2,rougeL,rougeLsum,pct_too_long,avg_extra_chars,pct_cutoff,"
    "mean_gen_chars,n,status,config_hash,seed";

inline std::string fixed6(double x) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", x);
  return buf;
}

inline void write_report_csv(const std::string& path, std::span<const ReportRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << kReportHeader << '\n';
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    const bool ok = r.status == "ok";
    auto num = [&](double x) { return ok ? fixed6(x) : std::string(); };
    out << kReportSchemaVersion << ',' << weight_label(r.w) << ',' << r.decode << ',' << num(m.rouge1) << ','
        << num(m.rouge2) << ',' << num(m.rougeL) << ',' << num(m.rougeLsum) << ',' << num(m.pct_too_long) << ','
        << num(m.avg_extra_chars) << ',' << num(m.pct_cutoff) << ',' << num(r.mean_gen_chars) << ','
        << (ok ? std::to_string(m.n_samples) : std::string()) << ',' << r.status << ',' << r.config_hash << ','
        << r.seed << '\n';
  }
}

inline void write_histograms_csv(const std::string& path, std::span<const HistogramRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << "w,decode,bin_lo,bin_hi,count\n";
  for (const auto& h : rows) {
    out << weight_label(h.w) << ',' << h.decode << ',' << h.bin_lo << ',' << h.bin_hi << ',' << h.count << '\n';
  }
}

/// Splits a CSV line without quoting (report fields never contain commas).
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

/// Renders report.csv as markdown: one table per decoding configuration,
/// rows ordered by W as in the file.
inline std::string render_markdown_report(const std::string& csv_path) {
  std::ifstream in(csv_path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + csv_path);
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != kReportHeader) throw ParseError(csv_path + ": unexpected report header");
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<std::string>>> by_decode;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() != 15) throw ParseError(csv_path + ": malformed row '" + line + "'");
    if (!by_decode.count(f[2])) order.push_back(f[2]);
    by_decode[f[2]].push_back(std::move(f));
  }
  auto short_num = [](const std::string& s) {
    if (s.empty()) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", std::stod(s));
    return std::string(buf);
  };
  std::ostringstream md;
  for (const auto& d : order) {
    md << "### " << d << "\n\n";
    md << "| W | Rouge-1 | Rouge-2 | Rouge-L | Rouge-Lsum | % too long | avg. extra char | % cut-off | mean length | "
          "status |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& f : by_decode[d]) {
      md << "| " << f[1];
      for (int c = 3; c <= 10; ++c) md << " | " << short_num(f[c]);
      md << " | " << f[12] << " |\n";
    }
    md << '\n';
  }
  return md.str();
}

namespace detail {

inline Json cell_identity(const ExperimentPlan& plan, double w, const GenerationConfig& g) {
  return Json{{"dataset", to_json(plan.dataset)},
              {"corpus", plan.data_dir ? Json{{"data_dir", *plan.data_dir}} : to_json(plan.corpus)},
              {"model", to_json(plan.model)},
              {"train", to_json(plan.train)},
              {"loss", to_json(LossConfig{w})},
              {"decode", to_json(g)}};
}

template <typename T>
void run_weight(const ExperimentPlan& plan, const Dataset& ds, double w, AblationResult& result,
                std::vector<std::vector<std::size_t>>& lengths) {
  namespace fs = std::filesystem;
  const std::string run_dir = (fs::path(plan.output_dir) / ("w" + weight_label(w))).string();
  const LossConfig loss_cfg{w};
  auto fail_all = [&](const std::string& status) {
    for (const auto& g : plan.decodes) {
      ReportRow row;
      row.w = w;
      row.decode = g.label();
      row.status = status;
      row.config_hash = config_hash(cell_identity(plan, w, g));
      row.seed = plan.train.seed;
      result.rows.push_back(row);
      lengths.emplace_back();
    }
  };

  std::optional<Transformer<T>> model;
  try {
    model.emplace(plan.model);
    const auto t0 = std::chrono::steady_clock::now();
    auto tr = train(*model, std::span<const Sample>(ds.train), std::span<const Sample>(ds.val), plan.train, loss_cfg,
                    run_dir);
    result.train_seconds[w] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (tr.diverged) {
      log::error("W=" + weight_label(w) + ": training diverged");
      result.any_diverged = true;
      fail_all("diverged");
      return;
    }
  } catch (const std::exception& e) {
    log::error("W=" + weight_label(w) + ": training failed: " + e.what());
    result.any_failed = true;
    fail_all("failed");
    return;
  }

  fs::create_directories(fs::path(run_dir) / "predictions");
  std::optional<std::size_t> fallback;
  if (plan.dataset.variant == Variant::kFixed) fallback = plan.dataset.fixed_char_limit;
  std::vector<std::string> refs;
  std::vector<std::size_t> limits;
  for (const auto& s : ds.test) {
    refs.push_back(s.reference);
    limits.push_back(sample_limit(s, fallback));
  }
  for (const auto& g : plan.decodes) {
    ReportRow row;
    row.w = w;
    row.decode = g.label();
    row.config_hash = config_hash(cell_identity(plan, w, g));
    row.seed = plan.train.seed;
    std::vector<std::size_t> lens;
    try {
      const auto preds = generate_texts(*model, std::span<const Sample>(ds.test), g);
      write_predictions((fs::path(run_dir) / "predictions" / (g.label() + ".jsonl")).string(), ds.test, preds);
      row.metrics = evaluate(preds, refs, limits);
      double total = 0;
      for (const auto& p : preds) {
        lens.push_back(utf8_length(p));
        total += static_cast<double>(lens.back());
      }
      row.mean_gen_chars = preds.empty() ? 0.0 : total / static_cast<double>(preds.size());
    } catch (const std::exception& e) {
      log::error("W=" + weight_label(w) + " " + g.label() + ": " + e.what());
      result.any_failed = true;
      row.status = "failed";
      lens.clear();
    }
    result.rows.push_back(row);
    lengths.push_back(std::move(lens));
  }
}

}  // namespace detail

/// Trains one model per W, decodes the test split under every decoding
/// configuration and writes the report files. A failing cell is recorded
/// with its status and the remaining cells still run.
inline AblationResult run_ablation(const ExperimentPlan& plan) {
  namespace fs = std::filesystem;
  plan.validate();
  fs::create_directories(plan.output_dir);
  {
    const Json pj = to_json(plan);
    std::ofstream out(fs::path(plan.output_dir) / "plan.json", std::ios::trunc);
    out << Json{{"plan", pj}, {"plan_hash", config_hash(pj)}}.dump(2) << '\n';
  }
  const Dataset ds = plan.data_dir ? read_dataset(*plan.data_dir) : make_synthetic_dataset(plan.corpus, plan.dataset);
  if (ds.test.empty()) throw InsufficientDataError("ablation: empty test split");

  AblationResult result;
  std::vector<std::vector<std::size_t>> lengths;  // parallel to result.rows
  for (double w : plan.resolved_weights()) {
    log::info("ablation: W=" + weight_label(w));
    if (plan.train.precision == Precision::kDouble) {
      detail::run_weight<double>(plan, ds, w, result, lengths);
    } else {
      detail::run_weight<float>(plan, ds, w, result, lengths);
    }
  }

  std::size_t max_len = 0;
  for (const auto& l : lengths)
    for (std::size_t x : l) max_len = std::max(max_len, x);
  const std::size_t bw = plan.hist_bin_width;
  const std::size_t n_bins = max_len / bw + 1;
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    if (result.rows[i].status != "ok") continue;
    std::vector<std::size_t> counts(n_bins, 0);
    for (std::size_t x : lengths[i]) ++counts[x / bw];
    for (std::size_t b = 0; b < n_bins; ++b) {
      result.histograms.push_back({result.rows[i].w, result.rows[i].decode, b * bw, (b + 1) * bw, counts[b]});
    }
  }
  write_report_csv((fs::path(plan.output_dir) / "report.csv").string(), result.rows);
  write_histograms_csv((fs::path(plan.output_dir) / "histograms.csv").string(), result.histograms);
  return result;
}

}  // namespace eosw
