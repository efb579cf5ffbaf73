// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Word-level embeddings for a dataset split, one matrix per model.
//
// On disk an embedding directory holds one subdirectory per model:
//
//   <dir>/<model>/<split>.emb          EMB1 file, piece- or word-level rows
//   <dir>/<model>/<split>.tok.jsonl    optional tokenization records
//
// When the tokenization file is present, piece rows are pooled to words;
// otherwise the rows must already be one per word.

#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ensner/align.hpp"
#include "ensner/corpus.hpp"
#include "ensner/embed.hpp"
#include "ensner/error.hpp"

namespace ensner {

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::vector<std::string> models) : models_(std::move(models)) {
    if (models_.empty()) throw DataError("embedding store needs at least one model");
  }

  const std::vector<std::string>& models() const noexcept { return models_; }
  std::size_t size() const noexcept { return by_id_.size(); }

  void add(const std::string& id, std::vector<EmbeddingMatrix> mats) {
    if (mats.size() != models_.size()) {
      throw DataError("sentence '" + id + "': " + std::to_string(mats.size()) + " matrices for " +
                      std::to_string(models_.size()) + " models");
    }
    for (const auto& m : mats) {
      if (m.rows() != mats[0].rows()) throw DataError("sentence '" + id + "': models disagree on row count");
    }
    if (!by_id_.emplace(id, std::move(mats)).second) throw DataError("duplicate sentence id '" + id + "'");
  }

  bool contains(const std::string& id) const { return by_id_.count(id) != 0; }

  const std::vector<EmbeddingMatrix>& at(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw DataError("no embeddings for sentence '" + id + "'");
    return it->second;
  }

  // Per-model dims, taken from any stored sentence.
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> d;
    if (by_id_.empty()) return d;
    for (const auto& m : by_id_.begin()->second) d.push_back(m.dim());
    return d;
  }

  // Keeps only the named models, in the given order.
  EmbeddingStore select(std::span<const std::string> models) const {
    std::vector<std::size_t> idx;
    for (const auto& name : models) {
      auto it = std::find(models_.begin(), models_.end(), name);
      if (it == models_.end()) throw DataError("model '" + name + "' not in embedding store");
      idx.push_back(static_cast<std::size_t>(it - models_.begin()));
    }
    EmbeddingStore out(std::vector<std::string>(models.begin(), models.end()));
    for (const auto& [id, mats] : by_id_) {
      std::vector<EmbeddingMatrix> sel;
      for (auto k : idx) sel.push_back(mats[k]);
      out.by_id_.emplace(id, std::move(sel));
    }
    return out;
  }

 private:
  std::vector<std::string> models_;
  std::map<std::string, std::vector<EmbeddingMatrix>> by_id_;
};

// Throws unless every sentence has embeddings with one row per word and
// each model's dim is the same across sentences.
inline void check_coverage(const EmbeddingStore& store, std::span<const Sentence> sentences) {
  std::vector<std::size_t> dims;
  for (const auto& s : sentences) {
    const auto& mats = store.at(s.id);
    if (dims.empty()) {
      for (const auto& m : mats) dims.push_back(m.dim());
    }
    for (std::size_t k = 0; k < mats.size(); ++k) {
      if (mats[k].rows() != s.words.size()) {
        throw DataError("sentence '" + s.id + "': model '" + store.models()[k] + "' has " +
                        std::to_string(mats[k].rows()) + " rows for " + std::to_string(s.words.size()) +
                        " words");
      }
      if (mats[k].dim() != dims[k]) throw DataError("model '" + store.models()[k] + "' has inconsistent dims");
    }
  }
}

inline std::filesystem::path embedding_path(const std::filesystem::path& dir, const std::string& model,
                                            const std::string& split) {
  return dir / model / (split + ".emb");
}

inline std::filesystem::path tokenization_path(const std::filesystem::path& dir, const std::string& model,
                                               const std::string& split) {
  return dir / model / (split + ".tok.jsonl");
}

// Models that have an EMB1 file for `split`, sorted by name.
inline std::vector<std::string> discover_models(const std::filesystem::path& dir, const std::string& split) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("embedding directory " + dir.string() + " not found");
  std::vector<std::string> models;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / (split + ".emb"))) {
      models.push_back(entry.path().filename().string());
    }
  }
  std::sort(models.begin(), models.end());
  if (models.empty()) throw DataError("no '" + split + ".emb' files under " + dir.string());
  return models;
}

inline EmbeddingStore load_store(const std::filesystem::path& dir, const std::string& split,
                                 std::span<const std::string> models, std::span<const Sentence> sentences,
                                 Pooling pooling = Pooling::kMean) {
  std::vector<EmbeddingFile> files;
  std::vector<std::map<std::string, Tokenization>> toks(models.size());
  for (std::size_t k = 0; k < models.size(); ++k) {
    files.push_back(read_embedding_file(embedding_path(dir, models[k], split), models[k]));
    auto tok_path = tokenization_path(dir, models[k], split);
    if (std::filesystem::exists(tok_path)) {
      for (auto& t : read_tokenization_file(tok_path)) {
        if (t.model_id != models[k]) continue;
        auto id = t.id;
        toks[k].insert_or_assign(id, std::move(t));
      }
    }
  }
  EmbeddingStore store(std::vector<std::string>(models.begin(), models.end()));
  for (const auto& s : sentences) {
    std::vector<EmbeddingMatrix> mats;
    for (std::size_t k = 0; k < models.size(); ++k) {
      auto it = files[k].find(s.id);
      if (it == files[k].end()) {
        throw DataError("model '" + models[k] + "' has no embeddings for sentence '" + s.id + "'");
      }
      auto t = toks[k].find(s.id);
      if (t != toks[k].end()) {
        mats.push_back(pool_subwords(it->second, t->second, s.words.size(), pooling));
      } else if (!toks[k].empty()) {
        throw DataError("model '" + models[k] + "' has no tokenization for sentence '" + s.id + "'");
      } else {
        mats.push_back(it->second);
      }
    }
    store.add(s.id, std::move(mats));
  }
  check_coverage(store, sentences);
  return store;
}

// Writes word-level EMB1 files, one per model, in sentence order.
inline void write_store(const std::filesystem::path& dir, const std::string& split, const EmbeddingStore& store,
                        std::span<const Sentence> sentences) {
  for (std::size_t k = 0; k < store.models().size(); ++k) {
    std::vector<std::pair<std::string, EmbeddingMatrix>> entries;
    for (const auto& s : sentences) entries.emplace_back(s.id, store.at(s.id)[k]);
    std::filesystem::create_directories(dir / store.models()[k]);
    write_embedding_file(embedding_path(dir, store.models()[k], split), entries);
  }
}

}  // namespace ensner
