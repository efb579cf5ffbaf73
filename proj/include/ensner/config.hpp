// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ensner/align.hpp"
#include "ensner/error.hpp"

namespace ensner {

enum class OptimizerKind { kSgd, kAdam };

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw DataError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

// Starting point for the CRF emission weights. The CRF objective is convex
// in its parameters, so zero needs no symmetry breaking; Glorot-uniform
// adds random emission scores that lr 1e-4 takes most of a 50-epoch run to
// wash out.
enum class WeightInit { kZero, kGlorot };

inline WeightInit weight_init_from_string(const std::string& s) {
  if (s == "zero") return WeightInit::kZero;
  if (s == "glorot") return WeightInit::kGlorot;
  throw DataError("unknown weight init '" + s + "' (expected zero|glorot)");
}

inline const char* to_string(WeightInit w) { return w == WeightInit::kZero ? "zero" : "glorot"; }

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t accumulation_steps = 4;
  std::size_t epochs = 50;
  std::size_t checkpoint_keep = 10;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 0;
  std::size_t batch_size = 1;  // sentences per step; an update every batch_size * accumulation_steps
  Pooling pooling = Pooling::kMean;
  bool constrained = false;
  std::size_t projection_dim = 0;  // 0 disables the per-model projections
  WeightInit weight_init = WeightInit::kZero;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;

  void validate() const {
    // lr = 0 is accepted: it freezes the parameters.
    if (!(learning_rate >= 0.0)) throw DataError("learning_rate must be non-negative");
    if (accumulation_steps < 1) throw DataError("accumulation_steps must be >= 1");
    if (epochs < 1) throw DataError("epochs must be >= 1");
    if (checkpoint_keep < 1) throw DataError("checkpoint_keep must be >= 1");
    if (batch_size < 1) throw DataError("batch_size must be >= 1");
  }

  std::size_t window() const noexcept { return accumulation_steps * batch_size; }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"accumulation_steps", c.accumulation_steps},
          {"epochs", c.epochs},
          {"checkpoint_keep", c.checkpoint_keep},
          {"optimizer", to_string(c.optimizer)},
          {"seed", c.seed},
          {"batch_size", c.batch_size},
          {"pooling", to_string(c.pooling)},
          {"constrained", c.constrained},
          {"projection_dim", c.projection_dim},
          {"weight_init", to_string(c.weight_init)},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon}};
}

// Keys absent from `j` keep their value from `base`; unknown keys are an error.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  if (!j.is_object()) throw DataError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "learning_rate") base.learning_rate = v.get<double>();
      else if (key == "accumulation_steps") base.accumulation_steps = v.get<std::size_t>();
      else if (key == "epochs") base.epochs = v.get<std::size_t>();
      else if (key == "checkpoint_keep") base.checkpoint_keep = v.get<std::size_t>();
      else if (key == "optimizer") base.optimizer = optimizer_from_string(v.get<std::string>());
      else if (key == "seed") base.seed = v.get<std::uint64_t>();
      else if (key == "batch_size") base.batch_size = v.get<std::size_t>();
      else if (key == "pooling") base.pooling = pooling_from_string(v.get<std::string>());
      else if (key == "constrained") base.constrained = v.get<bool>();
      else if (key == "projection_dim") base.projection_dim = v.get<std::size_t>();
      else if (key == "weight_init") base.weight_init = weight_init_from_string(v.get<std::string>());
      else if (key == "adam_beta1") base.adam_beta1 = v.get<double>();
      else if (key == "adam_beta2") base.adam_beta2 = v.get<double>();
      else if (key == "adam_epsilon") base.adam_epsilon = v.get<double>();
      else throw DataError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad config value: ") + e.what());
  }
  return base;
}

// FNV-1a over the fields that shape the optimization trajectory. Run
// length and retention are left out so a resumed run with a larger epoch
// budget stays compatible.
inline std::string config_hash(const TrainConfig& c, const std::vector<std::string>& models) {
  auto j = to_json(c);
  j.erase("epochs");
  j.erase("checkpoint_keep");
  j["models"] = models;
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ensner
