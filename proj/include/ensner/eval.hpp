// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iomanip>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ensner/corpus.hpp"
#include "ensner/error.hpp"

namespace ensner {

struct Counts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  // Zero denominators give 0, never NaN.
  double precision() const { return tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn); }
  double f1() const {
    double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }

  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct Metrics {
  Counts micro;
  std::map<std::string, Counts> per_label;

  double precision() const { return micro.precision(); }
  double recall() const { return micro.recall(); }
  double f1() const { return micro.f1(); }
};

// Exact (label, start, end) matching. Each gold span absorbs at most one
// prediction.
inline Metrics entity_f1(std::span<const std::vector<EntitySpan>> gold,
                         std::span<const std::vector<EntitySpan>> pred) {
  if (gold.size() != pred.size()) {
    throw DataError("entity_f1: " + std::to_string(gold.size()) + " gold sentences vs " +
                    std::to_string(pred.size()) + " predicted");
  }
  Metrics m;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    std::vector<bool> used(gold[s].size(), false);
    for (const auto& p : pred[s]) {
      bool hit = false;
      for (std::size_t g = 0; g < gold[s].size(); ++g) {
        if (!used[g] && gold[s][g] == p) {
          used[g] = hit = true;
          break;
        }
      }
      auto& c = m.per_label[p.label];
      (hit ? c.tp : c.fp) += 1;
    }
    for (std::size_t g = 0; g < gold[s].size(); ++g) {
      if (!used[g]) m.per_label[gold[s][g].label].fn += 1;
    }
  }
  for (const auto& [_, c] : m.per_label) m.micro += c;
  return m;
}

inline Metrics entity_f1(std::span<const Sentence> gold, std::span<const Sentence> pred) {
  if (gold.size() != pred.size()) {
    throw DataError("entity_f1: " + std::to_string(gold.size()) + " gold sentences vs " +
                    std::to_string(pred.size()) + " predicted");
  }
  std::vector<std::vector<EntitySpan>> g, p;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].id != pred[s].id) {
      throw DataError("entity_f1: sentence " + std::to_string(s) + " id mismatch ('" + gold[s].id +
                      "' vs '" + pred[s].id + "')");
    }
    g.push_back(gold[s].spans);
    p.push_back(pred[s].spans);
  }
  return entity_f1(std::span<const std::vector<EntitySpan>>(g), std::span<const std::vector<EntitySpan>>(p));
}

inline void print_metrics_table(std::ostream& out, const Metrics& m, const LabelSet& labels) {
  auto row = [&](const std::string& name, const Counts& c) {
    out << std::left << std::setw(12) << name << std::right << std::setw(6) << c.tp << std::setw(6) << c.fp
        << std::setw(6) << c.fn << std::fixed << std::setprecision(4) << std::setw(10) << c.precision()
        << std::setw(10) << c.recall() << std::setw(10) << c.f1() << '\n';
  };
  out << std::left << std::setw(12) << "label" << std::right << std::setw(6) << "tp" << std::setw(6) << "fp"
      << std::setw(6) << "fn" << std::setw(10) << "precision" << std::setw(10) << "recall" << std::setw(10)
      << "f1" << '\n';
  for (const auto& l : labels.labels()) {
    auto it = m.per_label.find(l);
    row(l, it == m.per_label.end() ? Counts{} : it->second);
  }
  row("micro", m.micro);
}

inline nlohmann::json to_json(const Counts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn},
          {"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()}};
}

inline nlohmann::json to_json(const Metrics& m) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [l, c] : m.per_label) per[l] = to_json(c);
  return {{"micro", to_json(m.micro)}, {"per_label", std::move(per)}};
}

}  // namespace ensner
