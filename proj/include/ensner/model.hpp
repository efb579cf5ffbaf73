// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// The full tagger: per-model embeddings -> ensembled word vectors -> CRF.

#pragma once

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ensner/config.hpp"
#include "ensner/corpus.hpp"
#include "ensner/crf.hpp"
#include "ensner/embed.hpp"
#include "ensner/store.hpp"

namespace ensner {

// CRF parameters plus optional per-model linear projections to a shared
// dim. Without projections the per-model matrices must share a dim and are
// averaged directly.
struct TaggerModel {
  CrfParams crf;
  std::vector<Matrix<double>> projections;  // [model], projection_dim x model dim

  bool projected() const noexcept { return !projections.empty(); }

  // Projections are always Glorot-initialized: with zero projections and
  // zero CRF weights both gradients vanish.
  template <typename Rng>
  static TaggerModel initialize(std::size_t num_tags, std::span<const std::size_t> model_dims,
                                std::size_t projection_dim, WeightInit init, Rng& rng) {
    auto crf_init = [&](std::size_t dim) {
      return init == WeightInit::kGlorot ? CrfParams::glorot(num_tags, dim, rng) : CrfParams::zeros(num_tags, dim);
    };
    if (model_dims.empty()) throw DataError("model needs at least one embedding source");
    TaggerModel m;
    if (projection_dim == 0) {
      for (auto d : model_dims) {
        if (d != model_dims[0]) {
          throw DataError("embedding dims differ across models (" + std::to_string(d) + " vs " +
                          std::to_string(model_dims[0]) + "); enable projection to mix them");
        }
      }
      m.crf = crf_init(model_dims[0]);
      return m;
    }
    m.crf = crf_init(projection_dim);
    for (auto d : model_dims) {
      Matrix<double> p(projection_dim, d);
      const double limit = std::sqrt(6.0 / static_cast<double>(d + projection_dim));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (auto& x : p.values()) x = u(rng);
      m.projections.push_back(std::move(p));
    }
    return m;
  }

  static TaggerModel zeros_like(const TaggerModel& other) {
    TaggerModel m;
    m.crf = CrfParams::zeros(other.crf.num_tags(), other.crf.dim());
    for (const auto& p : other.projections) m.projections.emplace_back(p.rows(), p.cols());
    return m;
  }

  template <typename F>
  void for_each_block(F&& f) {
    crf.for_each_block(f);
    for (std::size_t k = 0; k < projections.size(); ++k) {
      f(("projection." + std::to_string(k)).c_str(), projections[k].values());
    }
  }
  template <typename F>
  void for_each_block(F&& f) const {
    crf.for_each_block(f);
    for (std::size_t k = 0; k < projections.size(); ++k) {
      f(("projection." + std::to_string(k)).c_str(), projections[k].values());
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_block([&](const char*, std::span<const double> v) { n += v.size(); });
    return n;
  }

  friend bool operator==(const TaggerModel&, const TaggerModel&) = default;
};

// Word vectors fed to the CRF for one sentence.
inline EmbeddingMatrix word_features(const TaggerModel& model, std::span<const EmbeddingMatrix> per_model) {
  if (!model.projected()) return ensemble_average(per_model);
  if (per_model.size() != model.projections.size()) {
    throw DataError("model expects " + std::to_string(model.projections.size()) + " embedding sources, got " +
                    std::to_string(per_model.size()));
  }
  const auto n = per_model[0].rows();
  const auto out_dim = model.crf.dim();
  const double inv_k = 1.0 / static_cast<double>(per_model.size());
  Matrix<double> v(n, out_dim);
  for (std::size_t k = 0; k < per_model.size(); ++k) {
    const auto& p = model.projections[k];
    if (per_model[k].dim() != p.cols() || per_model[k].rows() != n) {
      throw DataError("embedding shape does not match projection " + std::to_string(k));
    }
    for (std::size_t i = 0; i < n; ++i) {
      auto src = per_model[k].row(i);
      for (std::size_t o = 0; o < out_dim; ++o) v(i, o) += dot(p.row(o), src);
    }
  }
  for (auto& x : v.values()) x *= inv_k;
  return EmbeddingMatrix(std::move(v));
}

// Backpropagates d loss / d features into the projection gradients.
inline void accumulate_projection_gradients(const TaggerModel& model, std::span<const EmbeddingMatrix> per_model,
                                            const Matrix<double>& feature_grad, TaggerModel& grad) {
  const double inv_k = 1.0 / static_cast<double>(per_model.size());
  for (std::size_t k = 0; k < model.projections.size(); ++k) {
    auto& gp = grad.projections[k];
    for (std::size_t i = 0; i < feature_grad.rows(); ++i) {
      auto src = per_model[k].row(i);
      for (std::size_t o = 0; o < gp.rows(); ++o) {
        const double g = feature_grad(i, o) * inv_k;
        auto dst = gp.row(o);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g * src[j];
      }
    }
  }
}

// Loss of one sentence; adds its gradient into `grad`.
inline double accumulate_sentence_gradient(const TaggerModel& model, std::span<const EmbeddingMatrix> per_model,
                                           std::span<const TagId> gold, const BioConstraints* constraints,
                                           TaggerModel& grad) {
  auto features = word_features(model, per_model);
  auto lat = emission_scores(features, model.crf, constraints);
  auto g = loss_gradients(lat, gold);
  if (model.projected()) {
    Matrix<double> dv;
    accumulate_param_gradients(features, model.crf, g, grad.crf, &dv);
    accumulate_projection_gradients(model, per_model, dv, grad);
  } else {
    accumulate_param_gradients(features, model.crf, g, grad.crf);
  }
  return g.loss;
}

inline DecodeResult decode(const TaggerModel& model, std::span<const EmbeddingMatrix> per_model,
                           const BioConstraints* constraints) {
  return viterbi(emission_scores(word_features(model, per_model), model.crf, constraints));
}

// Copies of `sentences` with spans replaced by decoded predictions.
inline std::vector<Sentence> predict_spans(const TaggerModel& model, const LabelSet& labels,
                                           std::span<const Sentence> sentences, const EmbeddingStore& store,
                                           bool constrained, BioMode mode = BioMode::kRepair) {
  std::optional<BioConstraints> mask;
  if (constrained) mask.emplace(labels.tag_count());
  std::vector<Sentence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    auto r = decode(model, store.at(s.id), mask ? &*mask : nullptr);
    Sentence p = s;
    p.spans = bio_to_spans(r.path, labels, mode);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace ensner
