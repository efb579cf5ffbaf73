// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Training loop: shuffled epochs, gradient accumulation, per-epoch
// checkpoints with bounded retention, and best-on-dev selection among the
// retained checkpoints.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ensner/checkpoint.hpp"
#include "ensner/config.hpp"
#include "ensner/corpus.hpp"
#include "ensner/eval.hpp"
#include "ensner/model.hpp"
#include "ensner/store.hpp"

namespace ensner {

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_precision = 0.0;
  double dev_recall = 0.0;
  double dev_f1 = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;  // epochs run by this invocation
  std::size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
  double wall_seconds = 0.0;
  std::vector<std::size_t> retained;  // checkpoint epochs on hand at the end
};

inline nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : r.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"dev", {{"precision", e.dev_precision}, {"recall", e.dev_recall}, {"f1", e.dev_f1}}}});
  }
  return {{"epochs", std::move(epochs)},     {"best_epoch", r.best_epoch}, {"best_dev_f1", r.best_dev_f1},
          {"wall_seconds", r.wall_seconds}, {"retained", r.retained}};
}

struct FitOptions {
  std::optional<std::filesystem::path> out_dir;      // checkpoints/, best.ckpt, report.json
  std::optional<std::filesystem::path> resume_from;  // checkpoint to continue from
  std::ostream* log = nullptr;                       // one line per epoch
};

struct FitResult {
  TaggerModel model;  // parameters of the selected checkpoint
  TrainReport report;
  Checkpoint best;
};

// Applies one update with the averaged gradient.
inline void optimizer_step(TaggerModel& model, const TaggerModel& grad, OptimizerState& state,
                           const TrainConfig& cfg) {
  ++state.step;
  const double lr = cfg.learning_rate;
  if (state.kind == OptimizerKind::kSgd) {
    auto gi = std::vector<std::span<const double>>{};
    grad.for_each_block([&](const char*, std::span<const double> g) { gi.push_back(g); });
    std::size_t b = 0;
    model.for_each_block([&](const char*, std::span<double> p) {
      auto g = gi[b++];
      for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr * g[k];
    });
    return;
  }
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2, eps = cfg.adam_epsilon;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  std::vector<std::span<const double>> gi;
  grad.for_each_block([&](const char*, std::span<const double> g) { gi.push_back(g); });
  std::size_t b = 0, off = 0;
  model.for_each_block([&](const char*, std::span<double> p) {
    auto g = gi[b++];
    for (std::size_t k = 0; k < p.size(); ++k, ++off) {
      double& m = state.first_moment[off];
      double& v = state.second_moment[off];
      m = b1 * m + (1.0 - b1) * g[k];
      v = b2 * v + (1.0 - b2) * g[k] * g[k];
      p[k] -= lr * (m / c1) / (std::sqrt(v / c2) + eps);
    }
  });
}

namespace detail {

inline std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw DataError("checkpoint: corrupt RNG state");
  return rng;
}

// Fisher-Yates over raw 64-bit draws; the modulo bias is below 2^-40 for
// any realistic corpus size, and the sequence is the same on every platform.
inline void shuffle(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
}

}  // namespace detail

// Mean loss over `window` sentences and one optimizer update with the mean
// gradient. The window is summed in ascending sentence-index order.
inline double train_window(TaggerModel& model, OptimizerState& opt, const TrainConfig& cfg,
                           std::span<const Sentence> sentences, const std::vector<TagSequence>& gold,
                           const EmbeddingStore& store, std::vector<std::size_t> window,
                           const BioConstraints* constraints,
                           const std::vector<std::optional<EmbeddingMatrix>>* averaged = nullptr) {
  std::sort(window.begin(), window.end());
  auto grad = TaggerModel::zeros_like(model);
  double loss_sum = 0.0;
  for (auto idx : window) {
    const auto& s = sentences[idx];
    double loss;
    if (averaged && (*averaged)[idx]) {
      // Cached ensemble features; no projection to backpropagate into.
      const auto& features = *(*averaged)[idx];
      auto lat = emission_scores(features, model.crf, constraints);
      auto g = loss_gradients(lat, gold[idx]);
      accumulate_param_gradients(features, model.crf, g, grad.crf);
      loss = g.loss;
    } else {
      loss = accumulate_sentence_gradient(model, store.at(s.id), gold[idx], constraints, grad);
    }
    if (!std::isfinite(loss)) {
      throw TrainError("non-finite loss on sentence '" + s.id + "' (optimizer step " +
                       std::to_string(opt.step + 1) + ")");
    }
    loss_sum += loss;
  }
  const double inv = 1.0 / static_cast<double>(window.size());
  grad.for_each_block([&](const char*, std::span<double> g) {
    for (auto& x : g) x *= inv;
  });
  optimizer_step(model, grad, opt, cfg);
  return loss_sum;
}

inline FitResult fit(std::span<const Sentence> train, const EmbeddingStore& train_store,
                     std::span<const Sentence> dev, const EmbeddingStore& dev_store, const LabelSet& labels,
                     const TrainConfig& cfg, const FitOptions& options = {}) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (train.empty()) throw DataError("training set is empty");
  check_coverage(train_store, train);
  check_coverage(dev_store, dev);
  if (dev_store.models() != train_store.models()) throw DataError("train and dev embeddings use different models");
  const auto t0 = std::chrono::steady_clock::now();

  const auto& models = train_store.models();
  std::vector<std::size_t> model_dims;
  for (const auto& m : train_store.at(train[0].id)) model_dims.push_back(m.dim());

  std::vector<TagSequence> gold;
  gold.reserve(train.size());
  for (const auto& s : train) gold.push_back(spans_to_bio(s.spans, s.words.size(), labels));

  std::optional<BioConstraints> mask;
  if (cfg.constrained) mask.emplace(labels.tag_count());
  const BioConstraints* constraints = mask ? &*mask : nullptr;

  std::mt19937_64 rng(cfg.seed);
  TaggerModel model = TaggerModel::initialize(labels.tag_count(), model_dims, cfg.projection_dim, cfg.weight_init, rng);
  OptimizerState opt{cfg.optimizer, 0, {}, {}};
  if (opt.kind == OptimizerKind::kAdam) {
    opt.first_moment.assign(model.parameter_count(), 0.0);
    opt.second_moment.assign(model.parameter_count(), 0.0);
  }
  std::size_t start_epoch = 0;
  std::deque<Checkpoint> retained;

  std::optional<fs::path> ckpt_dir;
  if (options.out_dir) {
    ckpt_dir = *options.out_dir / "checkpoints";
    fs::create_directories(*ckpt_dir);
  }

  const auto hash = config_hash(cfg, models);
  if (options.resume_from) {
    auto ck = read_checkpoint(*options.resume_from);
    if (config_hash(ck.config, ck.models) != hash) {
      throw DataError("resume checkpoint was trained with a different configuration");
    }
    if (ck.labels != labels.labels()) throw DataError("resume checkpoint uses a different label set");
    if (ck.model_dims != model_dims) throw DataError("resume checkpoint expects different embedding dims");
    model = ck.model;
    opt = ck.optimizer;
    rng = detail::rng_from_string(ck.rng_state);
    start_epoch = ck.epoch;
    if (ckpt_dir) {
      // Earlier checkpoints of the run being resumed stay in the retention window.
      std::vector<std::pair<std::size_t, fs::path>> found;
      for (const auto& entry : fs::directory_iterator(*ckpt_dir)) {
        if (entry.path().extension() != ".ckpt") continue;
        auto c = read_checkpoint(entry.path());
        if (c.epoch <= start_epoch && config_hash(c.config, c.models) == hash) found.emplace_back(c.epoch, entry.path());
      }
      std::sort(found.begin(), found.end());
      for (const auto& [_, p] : found) retained.push_back(read_checkpoint(p));
    }
    if (retained.empty() || retained.back().epoch != ck.epoch) retained.push_back(std::move(ck));
    while (retained.size() > cfg.checkpoint_keep) retained.pop_front();
  }

  // Without projections the ensembled features never change; build them once.
  std::vector<std::optional<EmbeddingMatrix>> averaged(train.size());
  if (!model.projected()) {
    for (std::size_t i = 0; i < train.size(); ++i) averaged[i] = ensemble_average(train_store.at(train[i].id));
  }

  TrainReport report;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    // Each epoch reshuffles the identity order, so the permutation depends
    // only on the RNG state carried in checkpoints.
    std::iota(order.begin(), order.end(), std::size_t{0});
    detail::shuffle(order, rng);
    double loss_sum = 0.0;
    std::vector<std::size_t> window;
    for (auto idx : order) {
      window.push_back(idx);
      if (window.size() == cfg.window()) {
        loss_sum += train_window(model, opt, cfg, train, gold, train_store, window, constraints, &averaged);
        window.clear();
      }
    }
    if (!window.empty()) {
      loss_sum += train_window(model, opt, cfg, train, gold, train_store, window, constraints, &averaged);
    }
    if (!model.crf.all_finite()) throw TrainError("parameters became non-finite in epoch " + std::to_string(epoch));

    auto pred = predict_spans(model, labels, dev, dev_store, cfg.constrained);
    auto metrics = entity_f1(dev, pred);
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train.size()), metrics.precision(), metrics.recall(),
                    metrics.f1()};
    report.epochs.push_back(rec);
    if (options.log) {
      *options.log << "epoch " << epoch << "/" << cfg.epochs << " loss " << rec.train_loss << " dev p "
                   << rec.dev_precision << " r " << rec.dev_recall << " f1 " << rec.dev_f1 << std::endl;
    }

    // Drop the oldest before writing so the directory never exceeds the limit.
    while (retained.size() >= cfg.checkpoint_keep) {
      if (ckpt_dir) fs::remove(*ckpt_dir / checkpoint_file_name(retained.front().epoch));
      retained.pop_front();
    }
    Checkpoint ck{epoch, rec.dev_f1, cfg, labels.labels(), models, model_dims, model, opt, detail::rng_to_string(rng)};
    if (ckpt_dir) write_checkpoint(*ckpt_dir / checkpoint_file_name(epoch), ck);
    retained.push_back(std::move(ck));
  }

  if (retained.empty()) throw DataError("nothing to train: resume checkpoint is already at the final epoch");
  std::size_t best = 0;
  for (std::size_t k = 1; k < retained.size(); ++k) {
    if (retained[k].dev_f1 > retained[best].dev_f1) best = k;  // strict: earliest epoch wins ties
  }
  FitResult result{retained[best].model, std::move(report), retained[best]};
  result.report.best_epoch = retained[best].epoch;
  result.report.best_dev_f1 = retained[best].dev_f1;
  for (const auto& c : retained) result.report.retained.push_back(c.epoch);
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (options.out_dir) {
    write_checkpoint(*options.out_dir / "best.ckpt", result.best);
    std::ofstream(*options.out_dir / "report.json") << to_json(result.report).dump(2) << '\n';
  }
  return result;
}

}  // namespace ensner
