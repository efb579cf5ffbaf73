// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic tagged corpora with known structure, used in place of real
// encoder output for tests and smoke runs.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "ensner/corpus.hpp"
#include "ensner/store.hpp"

namespace ensner {

struct SyntheticOptions {
  std::size_t sentences = 100;
  std::size_t dim = 16;
  double noise = 0.05;
  std::uint64_t seed = 7;
  std::size_t models = 3;
  std::size_t min_words = 6;
  std::size_t max_words = 16;
  double entity_rate = 0.35;  // chance that an entity starts at a free position
  std::size_t max_entity_words = 3;
};

struct SyntheticData {
  std::vector<Sentence> sentences;
  EmbeddingStore store;
};

inline std::string pseudo_model_name(std::size_t k) { return "pseudo" + std::to_string(k); }

// Every tag owns a fixed prototype vector drawn from N(0, 1). A word's
// vector under each pseudo-model is its tag's prototype plus independent
// N(0, noise^2) perturbation, so with noise = 0 all models agree exactly.
inline SyntheticData generate_synthetic(const SyntheticOptions& opt, const LabelSet& labels) {
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform_int = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  std::bernoulli_distribution starts_entity(opt.entity_rate);

  std::vector<std::vector<double>> prototypes(labels.tag_count(), std::vector<double>(opt.dim));
  for (auto& p : prototypes) {
    for (auto& x : p) x = normal(rng);
  }

  std::vector<std::string> models;
  for (std::size_t k = 0; k < opt.models; ++k) models.push_back(pseudo_model_name(k));
  SyntheticData out{{}, EmbeddingStore(models)};

  for (std::size_t s = 0; s < opt.sentences; ++s) {
    Sentence sent;
    sent.id = "synth-" + std::to_string(s);
    sent.domain = "synthetic";
    const auto n = uniform_int(opt.min_words, opt.max_words);
    for (std::size_t i = 0; i < n; ++i) sent.words.push_back("w" + std::to_string(uniform_int(0, 999)));
    for (std::size_t i = 0; i < n;) {
      if (!starts_entity(rng)) {
        ++i;
        continue;
      }
      const auto& label = labels.labels()[uniform_int(0, labels.size() - 1)];
      const auto len = std::min(uniform_int(1, opt.max_entity_words), n - i);
      sent.spans.push_back({label, i, i + len});
      i += len;
    }
    const auto tags = spans_to_bio(sent.spans, n, labels);

    std::vector<EmbeddingMatrix> mats;
    for (std::size_t k = 0; k < opt.models; ++k) {
      Matrix<double> m(n, opt.dim);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& proto = prototypes[tags[i]];
        for (std::size_t j = 0; j < opt.dim; ++j) {
          // Stored at f32 precision so the in-memory store matches what
          // EMB1 files round-trip to.
          m(i, j) = static_cast<float>(proto[j] + (opt.noise > 0 ? opt.noise * normal(rng) : 0.0));
        }
      }
      mats.emplace_back(std::move(m), models[k]);
    }
    out.store.add(sent.id, std::move(mats));
    out.sentences.push_back(std::move(sent));
  }
  return out;
}

}  // namespace ensner
