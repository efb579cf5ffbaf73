// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Per-model embedding matrices, the EMB1 container format, and ensemble
// averaging across models.
//
// EMB1 layout (little-endian):
//   "EMB1" | u32 version=1 | u32 sentence count
//   per sentence: u16 id length | id bytes | u32 rows | u32 dim | rows*dim f32

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ensner/error.hpp"
#include "ensner/matrix.hpp"

namespace ensner {

// Rows are word (or subword) vectors. Values are held in double; on disk
// they are f32, so a read/write cycle is lossless.
struct EmbeddingMatrix {
  Matrix<double> values;
  std::optional<std::string> source_model;

  EmbeddingMatrix() = default;
  explicit EmbeddingMatrix(Matrix<double> m, std::optional<std::string> model = std::nullopt)
      : values(std::move(m)), source_model(std::move(model)) {}

  std::size_t rows() const noexcept { return values.rows(); }
  std::size_t dim() const noexcept { return values.cols(); }
  std::span<const double> row(std::size_t r) const { return values.row(r); }

  bool all_finite() const {
    return std::all_of(values.values().begin(), values.values().end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

using EmbeddingFile = std::map<std::string, EmbeddingMatrix>;

namespace emb1 {

inline constexpr std::array<char, 4> kMagic = {'E', 'M', 'B', '1'};
inline constexpr std::uint32_t kVersion = 1;

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw DataError(std::string("EMB1: truncated payload while reading ") + what);
    }
  }
  std::uint16_t u16(const char* what) {
    unsigned char b[2];
    bytes(b, 2, what);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
  }
  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    bytes(b, 4, what);
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& in_;
};

inline void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>(v >> 24)};
  out.write(b, 4);
}

}  // namespace emb1

inline EmbeddingFile read_embedding_stream(std::istream& in,
                                           std::optional<std::string> model = std::nullopt) {
  emb1::Reader r(in);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), 4, "magic");
  if (magic != emb1::kMagic) throw DataError("EMB1: bad magic");
  auto version = r.u32("version");
  if (version != emb1::kVersion) throw DataError("EMB1: unsupported version " + std::to_string(version));
  auto count = r.u32("sentence count");

  EmbeddingFile out;
  for (std::uint32_t s = 0; s < count; ++s) {
    std::string id(r.u16("id length"), '\0');
    r.bytes(id.data(), id.size(), "id");
    auto rows = r.u32("rows");
    auto dim = r.u32("dim");
    Matrix<double> m(rows, dim);
    for (auto& v : m.values()) {
      float f = r.f32("values");
      if (!std::isfinite(f)) throw DataError("EMB1: non-finite value in sentence '" + id + "'");
      v = f;
    }
    if (!out.emplace(id, EmbeddingMatrix(std::move(m), model)).second) {
      throw DataError("EMB1: duplicate sentence id '" + id + "'");
    }
  }
  if (!r.at_eof()) throw DataError("EMB1: trailing bytes after last sentence");
  return out;
}

inline EmbeddingFile read_embedding_file(const std::filesystem::path& path,
                                         std::optional<std::string> model = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  try {
    return read_embedding_stream(in, std::move(model));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// Entries are written in the given order. Values are narrowed to f32.
inline void write_embedding_stream(std::ostream& out,
                                   std::span<const std::pair<std::string, EmbeddingMatrix>> entries) {
  out.write(emb1::kMagic.data(), 4);
  emb1::put_u32(out, emb1::kVersion);
  emb1::put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [id, m] : entries) {
    if (id.size() > 0xffff) throw DataError("EMB1: sentence id too long");
    if (!m.all_finite()) throw DataError("EMB1: non-finite value in sentence '" + id + "'");
    emb1::put_u16(out, static_cast<std::uint16_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    emb1::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    emb1::put_u32(out, static_cast<std::uint32_t>(m.dim()));
    for (double v : m.values.values()) emb1::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
}

inline void write_embedding_file(const std::filesystem::path& path,
                                 std::span<const std::pair<std::string, EmbeddingMatrix>> entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot create embedding file " + path.string());
  write_embedding_stream(out, entries);
  if (!out) throw DataError("write failed for " + path.string());
}

// Elementwise mean over models. Each element's k values are summed in
// ascending value order, which makes the result bit-identical under any
// permutation of the inputs. Identical inputs return that input exactly.
inline EmbeddingMatrix ensemble_average(std::span<const EmbeddingMatrix> mats) {
  if (mats.empty()) throw DataError("ensemble_average: no matrices");
  const auto rows = mats[0].rows();
  const auto dim = mats[0].dim();
  for (const auto& m : mats) {
    if (m.dim() != dim) {
      throw DataError("ensemble_average: dimension mismatch (" + std::to_string(m.dim()) + " vs " +
                      std::to_string(dim) + ")");
    }
    if (m.rows() != rows) {
      throw DataError("ensemble_average: row count mismatch (" + std::to_string(m.rows()) + " vs " +
                      std::to_string(rows) + ")");
    }
  }
  if (mats.size() == 1) return EmbeddingMatrix(mats[0].values);

  const double k = static_cast<double>(mats.size());
  Matrix<double> out(rows, dim);
  std::vector<double> column(mats.size());
  auto dst = out.values();
  for (std::size_t e = 0; e < dst.size(); ++e) {
    for (std::size_t m = 0; m < mats.size(); ++m) column[m] = mats[m].values.values()[e];
    std::sort(column.begin(), column.end(), [](double a, double b) {
      return a < b || (a == b && std::signbit(a) && !std::signbit(b));
    });
    if (column.front() == column.back()) {
      dst[e] = column.front();
      continue;
    }
    double sum = 0.0;
    for (double v : column) sum += v;
    dst[e] = sum / k;
  }
  return EmbeddingMatrix(std::move(out));
}

}  // namespace ensner
