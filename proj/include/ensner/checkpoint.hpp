// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint container.
//
//   "CKPT" | u32 version=1 | u64 header length | JSON header
//   | f64 parameter blocks (little-endian, order listed in header "blocks")
//   | Adam first-moment blocks | Adam second-moment blocks   (adam only)

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ensner/config.hpp"
#include "ensner/corpus.hpp"
#include "ensner/error.hpp"
#include "ensner/model.hpp"

namespace ensner {

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

struct Checkpoint {
  std::size_t epoch = 0;
  double dev_f1 = 0.0;
  TrainConfig config;
  std::vector<std::string> labels;
  std::vector<std::string> models;
  std::vector<std::size_t> model_dims;
  TaggerModel model;
  OptimizerState optimizer;
  std::string rng_state;
};

namespace ckpt {

inline constexpr std::array<char, 4> kMagic = {'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kVersion = 1;

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) throw DataError(std::string("checkpoint truncated at ") + what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline void put_doubles(std::ostream& out, std::span<const double> xs) {
  for (double x : xs) put_u64(out, std::bit_cast<std::uint64_t>(x));
}

inline void get_doubles(std::istream& in, std::span<double> xs, const char* what) {
  for (double& x : xs) x = std::bit_cast<double>(get_u64(in, what));
}

}  // namespace ckpt

inline void write_checkpoint(std::ostream& out, const Checkpoint& c) {
  nlohmann::json blocks = nlohmann::json::array();
  c.model.for_each_block([&](const char* name, std::span<const double> v) {
    blocks.push_back({{"name", name}, {"size", v.size()}});
  });
  nlohmann::json header = {
      {"format", "ensner-checkpoint"},
      {"epoch", c.epoch},
      {"dev_f1", c.dev_f1},
      {"config", to_json(c.config)},
      {"config_hash", config_hash(c.config, c.models)},
      {"labels", c.labels},
      {"models", c.models},
      {"model_dims", c.model_dims},
      {"dims", {{"tags", c.model.crf.num_tags()}, {"dim", c.model.crf.dim()}}},
      {"optimizer", {{"kind", to_string(c.optimizer.kind)}, {"step", c.optimizer.step}}},
      {"rng", c.rng_state},
      {"blocks", std::move(blocks)},
  };
  const auto text = header.dump();
  out.write(ckpt::kMagic.data(), 4);
  const std::uint32_t version = ckpt::kVersion;
  const char vb[4] = {static_cast<char>(version & 0xff), static_cast<char>((version >> 8) & 0xff),
                      static_cast<char>((version >> 16) & 0xff), static_cast<char>(version >> 24)};
  out.write(vb, 4);
  ckpt::put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  c.model.for_each_block([&](const char*, std::span<const double> v) { ckpt::put_doubles(out, v); });
  if (c.optimizer.kind == OptimizerKind::kAdam) {
    ckpt::put_doubles(out, c.optimizer.first_moment);
    ckpt::put_doubles(out, c.optimizer.second_moment);
  }
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4 || magic != ckpt::kMagic) throw DataError("checkpoint: bad magic");
  unsigned char vb[4];
  in.read(reinterpret_cast<char*>(vb), 4);
  if (in.gcount() != 4) throw DataError("checkpoint truncated at version");
  const std::uint32_t version = vb[0] | (vb[1] << 8) | (vb[2] << 16) | (std::uint32_t{vb[3]} << 24);
  if (version != ckpt::kVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto len = ckpt::get_u64(in, "header length");
  if (len > (1u << 30)) throw DataError("checkpoint: implausible header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (static_cast<std::uint64_t>(in.gcount()) != len) throw DataError("checkpoint truncated in header");

  Checkpoint c;
  nlohmann::json blocks;
  try {
    auto h = nlohmann::json::parse(text);
    c.epoch = h.at("epoch").get<std::size_t>();
    c.dev_f1 = h.at("dev_f1").get<double>();
    c.config = config_from_json(h.at("config"));
    c.labels = h.at("labels").get<std::vector<std::string>>();
    c.models = h.at("models").get<std::vector<std::string>>();
    c.model_dims = h.at("model_dims").get<std::vector<std::size_t>>();
    c.optimizer.kind = optimizer_from_string(h.at("optimizer").at("kind").get<std::string>());
    c.optimizer.step = h.at("optimizer").at("step").get<std::uint64_t>();
    c.rng_state = h.at("rng").get<std::string>();
    blocks = h.at("blocks");
    const auto tags = h.at("dims").at("tags").get<std::size_t>();
    const auto dim = h.at("dims").at("dim").get<std::size_t>();
    if (tags != LabelSet(c.labels).tag_count()) throw DataError("checkpoint: tag count does not match labels");
    c.model.crf = CrfParams::zeros(tags, dim);
    if (c.config.projection_dim > 0) {
      if (c.config.projection_dim != dim) throw DataError("checkpoint: projection dim does not match CRF dim");
      for (auto d : c.model_dims) c.model.projections.emplace_back(dim, d);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  if (!(c.dev_f1 >= 0.0 && c.dev_f1 <= 1.0)) throw DataError("checkpoint: dev_f1 outside [0,1]");

  std::size_t b = 0;
  c.model.for_each_block([&](const char* name, std::span<double> v) {
    if (b >= blocks.size() || blocks[b].at("name").get<std::string>() != name ||
        blocks[b].at("size").get<std::size_t>() != v.size()) {
      throw DataError(std::string("checkpoint: block layout mismatch at '") + name + "'");
    }
    ++b;
    ckpt::get_doubles(in, v, name);
  });
  if (b != blocks.size()) throw DataError("checkpoint: unexpected extra parameter blocks");
  if (c.optimizer.kind == OptimizerKind::kAdam) {
    const auto n = c.model.parameter_count();
    c.optimizer.first_moment.resize(n);
    c.optimizer.second_moment.resize(n);
    ckpt::get_doubles(in, c.optimizer.first_moment, "optimizer state");
    ckpt::get_doubles(in, c.optimizer.second_moment, "optimizer state");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("checkpoint: trailing bytes");
  if (!c.model.crf.all_finite()) throw DataError("checkpoint: non-finite parameters");
  return c;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot create checkpoint " + path.string());
  write_checkpoint(out, c);
  if (!out) throw DataError("write failed for " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  try {
    return read_checkpoint(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// Epoch-numbered file name; zero padding keeps lexical and numeric order equal.
inline std::string checkpoint_file_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch-%04zu.ckpt", epoch);
  return buf;
}

}  // namespace ensner
