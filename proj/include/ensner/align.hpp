// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Reconciling subword tokenizations from several encoders.
//
// Every encoder segments a word differently. For each word we record the
// segmentation with the fewest pieces (earliest model wins ties). Each
// model's own pieces are then pooled back to one vector per word, since a
// piece sequence from one tokenizer cannot be fed to another encoder.

#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ensner/embed.hpp"
#include "ensner/error.hpp"

namespace ensner {

struct Tokenization {
  std::string id;        // sentence id
  std::string model_id;
  std::vector<std::string> pieces;
  std::vector<std::size_t> word_index;  // owning word of each piece

  friend bool operator==(const Tokenization&, const Tokenization&) = default;
};

// Half-open range of piece indices.
struct PieceRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const PieceRange&, const PieceRange&) = default;
};

struct WordChoice {
  std::size_t model = 0;  // index into the input tokenization list
  PieceRange pieces;
};

struct WordAlignment {
  std::size_t n_words = 0;
  std::vector<std::string> models;
  std::vector<WordChoice> chosen;                   // [word]
  std::vector<std::vector<PieceRange>> per_model;   // [model][word]

  // Words whose piece count is not the same across all models.
  std::size_t disagreeing_words() const {
    std::size_t n = 0;
    for (std::size_t w = 0; w < n_words; ++w) {
      for (const auto& ranges : per_model) {
        if (ranges[w].size() != per_model[0][w].size()) {
          ++n;
          break;
        }
      }
    }
    return n;
  }
};

// Throws unless word_index is non-decreasing, gap-free, and covers 0..n-1.
inline std::vector<PieceRange> word_ranges(const Tokenization& tok, std::size_t n_words) {
  const std::string where = "tokenization '" + tok.model_id + "' of '" + tok.id + "': ";
  if (tok.pieces.size() != tok.word_index.size()) {
    throw DataError(where + "pieces and word_index differ in length");
  }
  std::vector<PieceRange> ranges(n_words);
  std::size_t expect = 0;
  for (std::size_t p = 0; p < tok.word_index.size(); ++p) {
    auto w = tok.word_index[p];
    if (p > 0 && w == tok.word_index[p - 1]) {
      ranges[w].end = p + 1;
      continue;
    }
    if (w != expect) {
      throw DataError(where + "word_index must be non-decreasing and cover every word (piece " +
                      std::to_string(p) + " maps to word " + std::to_string(w) + ")");
    }
    if (w >= n_words) throw DataError(where + "covers more than " + std::to_string(n_words) + " words");
    ranges[w] = {p, p + 1};
    ++expect;
  }
  if (expect != n_words) {
    throw DataError(where + "covers " + std::to_string(expect) + " of " + std::to_string(n_words) + " words");
  }
  return ranges;
}

inline WordAlignment select_min_tokenization(std::span<const Tokenization> toks, std::size_t n_words) {
  if (toks.empty()) throw DataError("select_min_tokenization: no tokenizations");
  WordAlignment a;
  a.n_words = n_words;
  for (const auto& t : toks) {
    a.models.push_back(t.model_id);
    a.per_model.push_back(word_ranges(t, n_words));
  }
  a.chosen.resize(n_words);
  for (std::size_t w = 0; w < n_words; ++w) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < toks.size(); ++m) {
      if (a.per_model[m][w].size() < a.per_model[best][w].size()) best = m;
    }
    a.chosen[w] = {best, a.per_model[best][w]};
  }
  return a;
}

enum class Pooling { kFirst, kMean };

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "first") return Pooling::kFirst;
  if (s == "mean") return Pooling::kMean;
  throw DataError("unknown pooling mode '" + s + "' (expected first|mean)");
}

inline const char* to_string(Pooling p) { return p == Pooling::kFirst ? "first" : "mean"; }

// Collapses piece rows to word rows.
inline EmbeddingMatrix pool_subwords(const EmbeddingMatrix& emb, const Tokenization& tok, std::size_t n_words,
                                     Pooling mode = Pooling::kMean) {
  if (emb.rows() != tok.pieces.size()) {
    throw DataError("pool_subwords: '" + tok.id + "' has " + std::to_string(emb.rows()) +
                    " embedding rows but " + std::to_string(tok.pieces.size()) + " pieces");
  }
  auto ranges = word_ranges(tok, n_words);
  Matrix<double> out(n_words, emb.dim());
  for (std::size_t w = 0; w < n_words; ++w) {
    auto dst = out.row(w);
    const auto r = ranges[w];
    if (mode == Pooling::kFirst) {
      auto src = emb.row(r.begin);
      std::copy(src.begin(), src.end(), dst.begin());
      continue;
    }
    for (std::size_t p = r.begin; p < r.end; ++p) {
      auto src = emb.row(p);
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    const double n = static_cast<double>(r.size());
    for (auto& v : dst) v /= n;
  }
  return EmbeddingMatrix(std::move(out), emb.source_model);
}

inline Tokenization tokenization_from_json(const nlohmann::json& j) {
  Tokenization t;
  t.id = j.at("id").get<std::string>();
  t.model_id = j.at("model").get<std::string>();
  t.pieces = j.at("pieces").get<std::vector<std::string>>();
  t.word_index = j.at("word_index").get<std::vector<std::size_t>>();
  return t;
}

inline nlohmann::json to_json(const Tokenization& t) {
  return {{"id", t.id}, {"model", t.model_id}, {"pieces", t.pieces}, {"word_index", t.word_index}};
}

inline std::vector<Tokenization> read_tokenization_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tokenization file " + path.string());
  std::vector<Tokenization> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(tokenization_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
  }
  return out;
}

}  // namespace ensner
