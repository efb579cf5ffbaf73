// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Exit codes: 0 success, 1 usage error, 2 data error.

#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ensner/align.hpp"
#include "ensner/checkpoint.hpp"
#include "ensner/config.hpp"
#include "ensner/corpus.hpp"
#include "ensner/eval.hpp"
#include "ensner/store.hpp"
#include "ensner/synth.hpp"
#include "ensner/train.hpp"

namespace ensner::cli {

inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;

namespace fs = std::filesystem;

inline std::vector<Sentence> load_dataset(const fs::path& path, const LabelSet& labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  try {
    return parse_dataset(in, labels);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

inline void save_dataset(const fs::path& path, std::span<const Sentence> sentences) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot create " + path.string());
  write_dataset(out, sentences);
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Split name of a dataset file: "data/dev.jsonl" -> "dev".
inline std::string split_of(const fs::path& p) { return p.stem().string(); }

struct Common {
  std::uint64_t seed = 0;
  std::string labels_csv;
  std::string pooling = "mean";
  bool constrained = false;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* pooling_opt = nullptr;
  CLI::Option* labels_opt = nullptr;

  LabelSet labels() const { return labels_csv.empty() ? LabelSet() : LabelSet::from_csv(labels_csv); }
};

inline void add_common(CLI::App& app, Common& c) {
  c.seed_opt = app.add_option("--seed", c.seed, "RNG seed; all randomness derives from it");
  c.labels_opt = app.add_option("--labels", c.labels_csv, "Comma-separated entity labels (default: the six NL4Opt labels)");
  c.pooling_opt = app.add_option("--pooling", c.pooling, "Subword pooling: first|mean")
                      ->check(CLI::IsMember({"first", "mean"}));
  app.add_flag("--constrained", c.constrained, "Mask invalid BIO transitions in the CRF");
}

struct TrainArgs {
  fs::path data, dev, emb_dir, out, config, resume;
  std::string models;
  double lr = 0;
  std::size_t accumulation = 0, epochs = 0, keep = 0, batch = 0, projection = 0;
  std::string optimizer;
  std::string init;
};

inline int run_train(const TrainArgs& a, const Common& common, const CLI::App& sub, std::ostream& out) {
  auto labels = common.labels();
  TrainConfig cfg;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw DataError("cannot open config " + a.config.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(a.config.string() + ": " + e.what());
    }
    cfg = config_from_json(j, cfg);
  }
  if (sub.count("--lr")) cfg.learning_rate = a.lr;
  if (sub.count("--accumulation")) cfg.accumulation_steps = a.accumulation;
  if (sub.count("--epochs")) cfg.epochs = a.epochs;
  if (sub.count("--keep")) cfg.checkpoint_keep = a.keep;
  if (sub.count("--batch-size")) cfg.batch_size = a.batch;
  if (sub.count("--projection-dim")) cfg.projection_dim = a.projection;
  if (sub.count("--optimizer")) cfg.optimizer = optimizer_from_string(a.optimizer);
  if (sub.count("--init")) cfg.weight_init = weight_init_from_string(a.init);
  if (common.seed_opt->count()) cfg.seed = common.seed;
  if (common.pooling_opt->count()) cfg.pooling = pooling_from_string(common.pooling);
  if (common.constrained) cfg.constrained = true;
  cfg.validate();

  auto train = load_dataset(a.data, labels);
  auto dev = load_dataset(a.dev, labels);
  auto models = a.models.empty() ? discover_models(a.emb_dir, split_of(a.data)) : split_csv(a.models);
  auto train_store = load_store(a.emb_dir, split_of(a.data), models, train, cfg.pooling);
  auto dev_store = load_store(a.emb_dir, split_of(a.dev), models, dev, cfg.pooling);

  FitOptions opts;
  opts.out_dir = a.out;
  opts.log = &out;
  if (!a.resume.empty()) opts.resume_from = a.resume;
  fs::create_directories(a.out);
  auto result = fit(train, train_store, dev, dev_store, labels, cfg, opts);
  out << "best epoch " << result.report.best_epoch << " dev f1 " << result.report.best_dev_f1 << '\n';
  return kOk;
}

struct PredictArgs {
  fs::path model, data, emb_dir, out;
  std::string models;
  bool strict = false;
  bool repair = false;
};

inline int run_predict(const PredictArgs& a, const Common& common, std::ostream& out) {
  auto ck = read_checkpoint(a.model);
  LabelSet labels(ck.labels);
  if (common.labels_opt->count() && !(common.labels() == labels)) {
    throw DataError("--labels does not match the labels stored in the model");
  }
  auto pooling = common.pooling_opt->count() ? pooling_from_string(common.pooling) : ck.config.pooling;
  auto models = a.models.empty() ? ck.models : split_csv(a.models);
  if (models != ck.models) throw DataError("model was trained on embeddings from a different model list");
  auto data = load_dataset(a.data, labels);
  auto store = load_store(a.emb_dir, split_of(a.data), models, data, pooling);
  auto pred = predict_spans(ck.model, labels, data, store, ck.config.constrained || common.constrained,
                            a.strict ? BioMode::kStrict : BioMode::kRepair);
  save_dataset(a.out, pred);
  out << "wrote " << pred.size() << " predictions to " << a.out.string() << '\n';
  return kOk;
}

struct EvalArgs {
  fs::path gold, pred, json;
};

inline int run_eval(const EvalArgs& a, const Common& common, std::ostream& out) {
  auto labels = common.labels();
  auto gold = load_dataset(a.gold, labels);
  auto pred = load_dataset(a.pred, labels);
  auto m = entity_f1(gold, pred);
  print_metrics_table(out, m, labels);
  if (!a.json.empty()) {
    std::ofstream j(a.json, std::ios::trunc);
    if (!j) throw DataError("cannot create " + a.json.string());
    j << to_json(m).dump(2) << '\n';
  }
  return kOk;
}

struct AlignArgs {
  fs::path data, emb_dir, json;
  std::string models;
  std::string split;
  bool verbose = false;
};

inline int run_align_inspect(const AlignArgs& a, const Common& common, std::ostream& out) {
  auto labels = common.labels();
  auto data = load_dataset(a.data, labels);
  const auto split = a.split.empty() ? split_of(a.data) : a.split;
  std::vector<std::string> models;
  if (!a.models.empty()) {
    models = split_csv(a.models);
  } else {
    for (const auto& entry : fs::directory_iterator(a.emb_dir)) {
      if (fs::exists(tokenization_path(a.emb_dir, entry.path().filename().string(), split))) {
        models.push_back(entry.path().filename().string());
      }
    }
    std::sort(models.begin(), models.end());
  }
  if (models.empty()) throw DataError("no tokenization files for split '" + split + "' under " + a.emb_dir.string());

  std::vector<std::map<std::string, Tokenization>> toks(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) {
    for (auto& t : read_tokenization_file(tokenization_path(a.emb_dir, models[k], split))) {
      auto id = t.id;
      toks[k].insert_or_assign(id, std::move(t));
    }
  }

  std::size_t words = 0, disagreeing = 0;
  std::vector<std::size_t> chosen_count(models.size(), 0);
  nlohmann::json sentences = nlohmann::json::array();
  for (const auto& s : data) {
    std::vector<Tokenization> per;
    for (std::size_t k = 0; k < models.size(); ++k) {
      auto it = toks[k].find(s.id);
      if (it == toks[k].end()) throw DataError("model '" + models[k] + "' has no tokenization for '" + s.id + "'");
      per.push_back(it->second);
    }
    auto al = select_min_tokenization(per, s.words.size());
    words += al.n_words;
    disagreeing += al.disagreeing_words();
    nlohmann::json jw = nlohmann::json::array();
    for (std::size_t w = 0; w < al.n_words; ++w) {
      ++chosen_count[al.chosen[w].model];
      std::vector<std::size_t> counts;
      for (const auto& r : al.per_model) counts.push_back(r[w].size());
      if (a.verbose) {
        out << s.id << '\t' << w << '\t' << s.words[w];
        for (auto c : counts) out << '\t' << c;
        out << '\t' << models[al.chosen[w].model] << '\n';
      }
      jw.push_back({{"word", s.words[w]}, {"piece_counts", counts}, {"selected", models[al.chosen[w].model]}});
    }
    sentences.push_back({{"id", s.id}, {"words", std::move(jw)}});
  }
  out << "models:";
  for (const auto& m : models) out << ' ' << m;
  out << "\nsentences: " << data.size() << "\nwords: " << words << "\nwords with differing piece counts: "
      << disagreeing << '\n';
  for (std::size_t k = 0; k < models.size(); ++k) {
    out << "selected " << models[k] << ": " << chosen_count[k] << '\n';
  }
  if (!a.json.empty()) {
    std::ofstream j(a.json, std::ios::trunc);
    if (!j) throw DataError("cannot create " + a.json.string());
    j << nlohmann::json{{"models", models}, {"words", words}, {"disagreeing_words", disagreeing},
                        {"sentences", std::move(sentences)}}
             .dump(2)
      << '\n';
  }
  return kOk;
}

struct SynthArgs {
  fs::path out;
  std::size_t train = 200, dev = 50, dim = 16, models = 3;
  double sigma = 0.05;
};

// Train and dev come from one draw so they share tag prototypes.
inline int run_gen_synth(const SynthArgs& a, const Common& common, std::ostream& out) {
  auto labels = common.labels();
  SyntheticOptions opt;
  opt.sentences = a.train + a.dev;
  opt.dim = a.dim;
  opt.noise = a.sigma;
  opt.models = a.models;
  opt.seed = common.seed_opt->count() ? common.seed : 7;
  if (opt.models < 1 || opt.dim < 1) throw DataError("gen-synth needs at least one model and dim >= 1");
  if (a.train < 1) throw DataError("gen-synth needs at least one training sentence");
  auto data = generate_synthetic(opt, labels);
  std::span<const Sentence> all(data.sentences);
  auto train = all.first(a.train);
  auto dev = all.subspan(a.train);
  fs::create_directories(a.out);
  save_dataset(a.out / "train.jsonl", train);
  save_dataset(a.out / "dev.jsonl", dev);
  write_store(a.out / "embs", "train", data.store, train);
  write_store(a.out / "embs", "dev", data.store, dev);
  out << "wrote " << train.size() << " train / " << dev.size() << " dev sentences, " << opt.models
      << " models, dim " << opt.dim << " to " << a.out.string() << '\n';
  return kOk;
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Ensemble-embedding CRF tagger"};
  app.require_subcommand(1);
  Common common;
  add_common(app, common);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a CRF on ensembled embeddings");
  train->fallthrough();
  train->add_option("--data", ta.data, "Training set (JSONL)")->required();
  train->add_option("--dev", ta.dev, "Development set (JSONL)")->required();
  train->add_option("--emb-dir", ta.emb_dir, "Embedding directory (<dir>/<model>/<split>.emb)")->required();
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_option("--models", ta.models, "Comma-separated model subdirectories, in averaging order");
  train->add_option("--config", ta.config, "JSON config file; flags override it");
  train->add_option("--lr", ta.lr, "Learning rate");
  train->add_option("--accumulation", ta.accumulation, "Gradient accumulation steps");
  train->add_option("--epochs", ta.epochs, "Epochs");
  train->add_option("--keep", ta.keep, "Checkpoints to retain");
  train->add_option("--batch-size", ta.batch, "Sentences per step");
  train->add_option("--projection-dim", ta.projection, "Enable per-model projections to this dim");
  train->add_option("--optimizer", ta.optimizer, "sgd|adam")->check(CLI::IsMember({"sgd", "adam"}));
  train->add_option("--init", ta.init, "CRF weight init: zero|glorot")->check(CLI::IsMember({"zero", "glorot"}));
  train->add_option("--resume", ta.resume, "Continue from this checkpoint");

  PredictArgs pa;
  auto* predict = app.add_subcommand("predict", "Decode a dataset with a trained model");
  predict->fallthrough();
  predict->add_option("--model", pa.model, "Checkpoint file")->required();
  predict->add_option("--data", pa.data, "Dataset to tag (JSONL)")->required();
  predict->add_option("--emb-dir", pa.emb_dir, "Embedding directory")->required();
  predict->add_option("--out", pa.out, "Output JSONL with predicted spans")->required();
  predict->add_option("--models", pa.models, "Comma-separated model list (must match the checkpoint)");
  auto* strict = predict->add_flag("--strict-bio", pa.strict, "Reject decoded paths with dangling I- tags");
  auto* repair = predict->add_flag("--repair-bio", pa.repair, "Treat dangling I- tags as B- (default)");
  strict->excludes(repair);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Entity-level precision/recall/F1");
  eval->fallthrough();
  eval->add_option("--gold", ea.gold, "Gold JSONL")->required();
  eval->add_option("--pred", ea.pred, "Predicted JSONL")->required();
  eval->add_option("--json", ea.json, "Also write the metrics as JSON");

  AlignArgs aa;
  auto* align = app.add_subcommand("align-inspect", "Report per-word subword counts and the minimum-length selection");
  align->fallthrough();
  align->add_option("--data", aa.data, "Dataset (JSONL)")->required();
  align->add_option("--emb-dir", aa.emb_dir, "Directory with <model>/<split>.tok.jsonl")->required();
  align->add_option("--split", aa.split, "Split name (default: dataset file stem)");
  align->add_option("--models", aa.models, "Comma-separated models (default: all with tokenizations)");
  align->add_option("--json", aa.json, "Write a JSON report");
  align->add_flag("--verbose", aa.verbose, "Print one line per word");

  SynthArgs sa;
  auto* synth = app.add_subcommand("gen-synth", "Generate a synthetic corpus with pseudo-model embeddings");
  synth->fallthrough();
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--train", sa.train, "Training sentences");
  synth->add_option("--dev", sa.dev, "Development sentences");
  synth->add_option("--dim", sa.dim, "Embedding dim");
  synth->add_option("--sigma", sa.sigma, "Noise standard deviation")->check(CLI::NonNegativeNumber);
  synth->add_option("--models", sa.models, "Number of pseudo-models");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*train) return run_train(ta, common, *train, out);
    if (*predict) return run_predict(pa, common, out);
    if (*eval) return run_eval(ea, common, out);
    if (*align) return run_align_inspect(aa, common, out);
    if (*synth) return run_gen_synth(sa, common, out);
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const TrainError& e) {
    err << "training failed: " << e.what() << '\n';
    return kDataError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace ensner::cli
