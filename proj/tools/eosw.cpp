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

// eosw command-line tool: gen-data, train, generate, evaluate, ablate, report.
//
// Exit codes: 0 success, 1 other error, 2 data error, 3 training divergence,
// 4 evaluation alignment error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "eosw/eosw.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitData = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitAlignment = 4;

// Reads JSON config files, flattening nested objects into subcommand
// sections. Anything that does not start with '{' is handed to the TOML reader.
class JsonOrTomlConfig : public CLI::ConfigTOML {
 public:
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::stringstream buf;
    buf << input.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos || text[first] != '{') {
      std::istringstream again(text);
      return CLI::ConfigTOML::from_config(again);
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError("config", std::string("invalid JSON config: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    flatten(j, {}, items);
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
  }

  static void flatten(const nlohmann::json& j, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        flatten(value, p, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& e : value) item.inputs.push_back(scalar(e));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

std::string output_root() {
  const char* env = std::getenv("EOSW_OUTPUT_ROOT");
  return env && *env ? env : "runs";
}

std::string under_root(const std::string& path, const std::string& fallback_leaf) {
  if (!path.empty()) return path;
  return (fs::path(output_root()) / fallback_leaf).string();
}

struct ModelFlags {
  eosw::ModelConfig cfg;
  void add(CLI::App* app) {
    app->add_option("--d-model", cfg.d_model, "Embedding width")->capture_default_str();
    app->add_option("--n-heads", cfg.n_heads, "Attention heads")->capture_default_str();
    app->add_option("--n-layers", cfg.n_layers, "Transformer blocks")->capture_default_str();
    app->add_option("--ff-mult", cfg.ff_mult, "MLP width multiplier")->capture_default_str();
    app->add_option("--max-seq-len", cfg.max_seq_len, "Longest packed sequence")->capture_default_str();
    app->add_option("--dropout", cfg.dropout_rate, "Dropout rate")->capture_default_str();
    app->add_option("--model-seed", cfg.seed, "Initialization seed")->capture_default_str();
  }
};

struct TrainFlags {
  eosw::TrainConfig cfg;
  std::string schedule = "linear";
  std::string precision = "single";
  void add(CLI::App* app) {
    app->add_option("--lr", cfg.base_lr, "Base learning rate")->capture_default_str();
    app->add_option("--weight-decay", cfg.weight_decay, "Decoupled weight decay")->capture_default_str();
    app->add_option("--schedule", schedule, "linear or cosine")
        ->check(CLI::IsMember({"linear", "cosine"}))
        ->capture_default_str();
    app->add_option("--steps", cfg.max_steps, "Optimizer steps")->capture_default_str();
    app->add_option("--batch-size", cfg.batch_size, "Sequences per step")->capture_default_str();
    app->add_option("--eval-every", cfg.eval_every, "Validation cadence in steps")->capture_default_str();
    app->add_option("--seed", cfg.seed, "Data order and dropout seed")->capture_default_str();
    app->add_option("--precision", precision, "single or double")
        ->check(CLI::IsMember({"single", "double"}))
        ->capture_default_str();
    app->add_option("--grad-clip", cfg.grad_clip, "Global gradient norm clip (0 disables)")->capture_default_str();
  }
  eosw::TrainConfig resolved() const {
    auto c = cfg;
    c.schedule = eosw::parse_schedule(schedule);
    c.precision = eosw::parse_precision(precision);
    return c;
  }
};

struct DecodeFlags {
  std::string strategy = "greedy";
  std::size_t num_beams = 5;
  double length_penalty = 0.0;
  std::size_t max_new_tokens = 256;
  std::size_t truncate_at = 0;
  bool suppress_eos = false;
  void add(CLI::App* app) {
    app->add_option("--strategy", strategy, "greedy or beam")
        ->check(CLI::IsMember({"greedy", "beam"}))
        ->capture_default_str();
    app->add_option("--num-beams", num_beams, "Beam width")->capture_default_str();
    app->add_option("--length-penalty", length_penalty, "Beam length exponent (positive favours length)")
        ->capture_default_str();
    app->add_option("--max-new-tokens", max_new_tokens, "Generation cap")->capture_default_str();
    app->add_option("--truncate-at", truncate_at, "Cut outputs at this many characters (0 keeps them whole)");
    app->add_flag("--suppress-eos", suppress_eos, "Never emit EOS; stop only at the cap");
  }
  eosw::GenerationConfig resolved() const {
    eosw::GenerationConfig g;
    g.strategy = strategy == "beam" ? eosw::Strategy::kBeam : eosw::Strategy::kGreedy;
    g.num_beams = g.strategy == eosw::Strategy::kBeam ? num_beams : 1;
    g.length_penalty = length_penalty;
    g.max_new_tokens = max_new_tokens;
    if (truncate_at > 0) g.truncate_at_chars = truncate_at;
    g.suppress_eos = suppress_eos;
    g.validate();
    return g;
  }
};

template <typename T>
int run_train(const eosw::ModelConfig& mc, const eosw::TrainConfig& tc, const eosw::LossConfig& lc,
              const eosw::Dataset& ds, const std::string& out_dir) {
  eosw::Transformer<T> model(mc);
  eosw::log::info("model parameters: " + std::to_string(model.num_parameters()));
  auto res = eosw::train(model, std::span<const eosw::Sample>(ds.train), std::span<const eosw::Sample>(ds.val), tc,
                         lc, out_dir);
  std::cout << eosw::Json{{"run_dir", out_dir},
                          {"best_step", res.best.step},
                          {"best_val_loss", std::isfinite(res.best.val_loss) ? eosw::Json(res.best.val_loss)
                                                                            : eosw::Json(nullptr)},
                          {"steps_run", res.steps_run},
                          {"diverged", res.diverged}}
                   .dump(2)
            << '\n';
  return res.diverged ? kExitDiverged : kExitOk;
}

template <typename T>
int run_generate(const std::string& model_path, const std::string& input, const std::string& output,
                 const eosw::GenerationConfig& g) {
  auto model = eosw::load_model<T>(model_path);
  const auto samples = eosw::read_jsonl(input, /*require_reference=*/false);
  const auto preds = eosw::generate_texts(model, std::span<const eosw::Sample>(samples), g);
  if (const auto parent = fs::path(output).parent_path(); !parent.empty()) fs::create_directories(parent);
  eosw::write_predictions(output, samples, preds);
  eosw::log::info("wrote " + std::to_string(preds.size()) + " predictions to " + output);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EOS-weighted loss laboratory: data, training, decoding, evaluation and ablations"};
  app.config_formatter(std::make_shared<JsonOrTomlConfig>());
  app.set_config("--config", "", "JSON or TOML file with option values (command-line flags take precedence)");
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");
  app.add_flag("-q,--quiet", quiet, "Only errors");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Build train/val/test JSONL for the fixed or dynamic variant");
  eosw::DatasetSpec spec;
  eosw::CorpusSource corpus;
  std::string variant = "fixed", gen_out, corpus_jsonl;
  std::uint64_t gen_seed = 0;
  gen->add_option("--variant", variant, "fixed or dynamic")
      ->check(CLI::IsMember({"fixed", "dynamic"}))
      ->capture_default_str();
  gen->add_option("--limit", spec.fixed_char_limit, "Character limit for the fixed variant")->capture_default_str();
  gen->add_option("--k-start", spec.k_start, "Dynamic grid start")->capture_default_str();
  gen->add_option("--k-stop", spec.k_stop, "Dynamic grid stop")->capture_default_str();
  gen->add_option("--k-step", spec.k_step, "Dynamic grid stride")->capture_default_str();
  gen->add_option("--train-size", spec.train_size)->capture_default_str();
  gen->add_option("--val-size", spec.val_size)->capture_default_str();
  gen->add_option("--test-size", spec.test_size)->capture_default_str();
  gen->add_option("--min-sentences", spec.min_sentences, "Drop references with fewer sentences")
      ->capture_default_str();
  gen->add_option("--seed", gen_seed, "Seed for corpus generation and splitting")->capture_default_str();
  gen->add_option("--corpus-size", corpus.corpus_size, "Synthetic samples before filtering (0: twice the splits)")
      ->capture_default_str();
  gen->add_option("--noise-items", corpus.config.noise_items, "Maximum optional tail facts")->capture_default_str();
  gen->add_option("--min-marked", corpus.config.min_marked)->capture_default_str();
  gen->add_option("--max-marked", corpus.config.max_marked)->capture_default_str();
  gen->add_option("--min-unmarked", corpus.config.min_unmarked)->capture_default_str();
  gen->add_option("--max-unmarked", corpus.config.max_unmarked)->capture_default_str();
  gen->add_option("--tail-hazards", corpus.config.tail_hazards, "Per-step tail stopping probabilities");
  gen->add_flag("--marked-first", corpus.config.marked_first, "Place marked facts before unmarked ones");
  gen->add_flag("--shuffle-tail", corpus.config.shuffle_tail, "Draw tail facts at random from the unmarked ones");
  gen->add_option("--corpus", corpus_jsonl, "Build from this JSONL corpus instead of the synthetic generator");
  gen->add_option("--out-dir", gen_out, "Output directory (default $EOSW_OUTPUT_ROOT/data)");

  // train
  auto* tr = app.add_subcommand("train", "Train one model with a given EOS weight");
  ModelFlags model_flags;
  TrainFlags train_flags;
  std::string data_dir, run_dir;
  double eos_weight = 1.0;
  tr->add_option("--data-dir", data_dir, "Directory with train.jsonl and val.jsonl")->required();
  tr->add_option("--out", run_dir, "Run directory (default $EOSW_OUTPUT_ROOT/train)");
  tr->add_option("--eos-weight", eos_weight, "EOS weight W (>= 1)")->capture_default_str();
  model_flags.add(tr);
  train_flags.add(tr);

  // generate
  auto* gn = app.add_subcommand("generate", "Decode a JSONL file with a trained checkpoint");
  DecodeFlags decode_flags;
  std::string model_path, gen_input, gen_output, gen_precision = "single";
  gn->add_option("--model", model_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  gn->add_option("--input", gen_input, "JSONL with id and source")->required()->check(CLI::ExistingFile);
  gn->add_option("--output", gen_output, "Predictions JSONL (default $EOSW_OUTPUT_ROOT/predictions.jsonl)");
  gn->add_option("--precision", gen_precision, "single or double")
      ->check(CLI::IsMember({"single", "double"}))
      ->capture_default_str();
  decode_flags.add(gn);

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score predictions against references");
  std::string pred_path, ref_path, eval_json, eval_csv;
  std::size_t default_limit = 0;
  ev->add_option("--predictions", pred_path, "JSONL with id and prediction")->required()->check(CLI::ExistingFile);
  ev->add_option("--references", ref_path, "JSONL with id, reference and optional char_limit")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--limit", default_limit, "Character limit for references without char_limit");
  ev->add_option("--json-out", eval_json, "Also write the report JSON here");
  ev->add_option("--csv-out", eval_csv, "Also write a report.csv-style row here");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train per EOS weight, decode, evaluate and write reports");
  std::string plan_path, ab_out;
  std::vector<double> ab_weights;
  bool with_baseline = false;
  ab->add_option("--plan", plan_path, "Experiment plan JSON")->required()->check(CLI::ExistingFile);
  ab->add_option("--output-dir", ab_out, "Override the plan's output directory");
  ab->add_option("--weights", ab_weights, "Override the plan's EOS weights");
  ab->add_flag("--with-baseline", with_baseline, "Always include W = 1");

  // report
  auto* rp = app.add_subcommand("report", "Render report.csv as markdown tables");
  std::string report_in, report_out;
  rp->add_option("--input", report_in, "report.csv or an ablation directory")->required();
  rp->add_option("--output", report_out, "Markdown file (default stdout)");

  CLI11_PARSE(app, argc, argv);
  if (verbose) eosw::log::set_level(eosw::log::Level::kDebug);
  if (quiet) eosw::log::set_level(eosw::log::Level::kError);

  try {
    if (gen->parsed()) {
      spec.variant = eosw::parse_variant(variant);
      spec.seed = gen_seed;
      corpus.corpus_seed = gen_seed;
      const std::string out = under_root(gen_out, "data");
      eosw::Dataset ds;
      if (!corpus_jsonl.empty()) {
        ds = eosw::build_dataset(eosw::read_jsonl(corpus_jsonl), spec);
      } else {
        ds = eosw::make_synthetic_dataset(corpus, spec);
      }
      eosw::write_dataset(out, ds);
      std::cout << eosw::Json{{"out_dir", out},
                              {"train", ds.train.size()},
                              {"val", ds.val.size()},
                              {"test", ds.test.size()},
                              {"dropped", ds.dropped}}
                       .dump(2)
                << '\n';
      return kExitOk;
    }
    if (tr->parsed()) {
      const auto tc = train_flags.resolved();
      const eosw::LossConfig lc{eos_weight};
      eosw::Dataset ds;
      ds.train = eosw::read_jsonl((fs::path(data_dir) / "train.jsonl").string());
      ds.val = eosw::read_jsonl((fs::path(data_dir) / "val.jsonl").string());
      const std::string out = under_root(run_dir, "train");
      return tc.precision == eosw::Precision::kDouble ? run_train<double>(model_flags.cfg, tc, lc, ds, out)
                                                      : run_train<float>(model_flags.cfg, tc, lc, ds, out);
    }
    if (gn->parsed()) {
      const auto g = decode_flags.resolved();
      const std::string out = under_root(gen_output, "predictions.jsonl");
      return eosw::parse_precision(gen_precision) == eosw::Precision::kDouble
                 ? run_generate<double>(model_path, gen_input, out, g)
                 : run_generate<float>(model_path, gen_input, out, g);
    }
    if (ev->parsed()) {
      std::optional<std::size_t> fallback;
      if (default_limit > 0) fallback = default_limit;
      const auto report =
          eosw::evaluate_aligned(eosw::read_predictions(pred_path), eosw::read_jsonl(ref_path), fallback);
      const auto j = eosw::to_json(report);
      std::cout << j.dump(2) << '\n';
      if (!eval_json.empty()) std::ofstream(eval_json, std::ios::trunc) << j.dump(2) << '\n';
      if (!eval_csv.empty()) {
        eosw::ReportRow row;
        row.decode = "external";
        row.metrics = report;
        row.config_hash = eosw::fnv1a_hex(pred_path + "|" + ref_path);
        eosw::write_report_csv(eval_csv, std::span<const eosw::ReportRow>(&row, 1));
      }
      return kExitOk;
    }
    if (ab->parsed()) {
      std::ifstream in(plan_path);
      auto plan = eosw::plan_from_json(eosw::Json::parse(in));
      if (!ab_out.empty()) plan.output_dir = ab_out;
      if (!ab_weights.empty()) plan.eos_weights = ab_weights;
      if (with_baseline) plan.with_baseline = true;
      if (fs::path(plan.output_dir).is_relative() && std::getenv("EOSW_OUTPUT_ROOT")) {
        plan.output_dir = (fs::path(output_root()) / plan.output_dir).string();
      }
      const auto res = eosw::run_ablation(plan);
      std::cout << eosw::render_markdown_report((fs::path(plan.output_dir) / "report.csv").string());
      if (res.any_diverged) return kExitDiverged;
      return res.any_failed ? kExitError : kExitOk;
    }
    if (rp->parsed()) {
      std::string csv = report_in;
      if (fs::is_directory(csv)) csv = (fs::path(csv) / "report.csv").string();
      const auto md = eosw::render_markdown_report(csv);
      if (report_out.empty()) {
        std::cout << md;
      } else {
        std::ofstream(report_out, std::ios::trunc) << md;
      }
      return kExitOk;
    }
  } catch (const eosw::AlignmentError& e) {
    eosw::log::error(e.what());
    return kExitAlignment;
  } catch (const eosw::InsufficientDataError& e) {
    eosw::log::error(e.what());
    return kExitData;
  } catch (const eosw::ParseError& e) {
    eosw::log::error(e.what());
    return kExitData;
  } catch (const eosw::EncodingError& e) {
    eosw::log::error(e.what());
    return kExitData;
  } catch (const eosw::InputError& e) {
    eosw::log::error(e.what());
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    eosw::log::error(std::string("JSON error: ") + e.what());
    return kExitData;
  } catch (const std::exception& e) {
    eosw::log::error(e.what());
    return kExitError;
  }
  return kExitOk;
}
