// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Independent reference computations for the test suites. Nothing here
// calls the dynamic programs it is used to check.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "ensner/corpus.hpp"
#include "ensner/crf.hpp"
#include "ensner/embed.hpp"

namespace ensner::oracle {

struct Enumerated {
  std::vector<TagSequence> paths;
  std::vector<long double> scores;
};

// Every tag sequence of the lattice's length, with its score summed
// directly from the definition.
inline Enumerated enumerate_paths(const ScoreLattice& lat) {
  const auto n = lat.length();
  const auto tags = lat.num_tags();
  Enumerated out;
  TagSequence path(n, 0);
  while (true) {
    long double s = static_cast<long double>(lat.start[path[0]]) + lat.end[path[n - 1]];
    for (std::size_t i = 0; i < n; ++i) s += lat.emissions(i, path[i]);
    for (std::size_t i = 1; i < n; ++i) s += lat.transitions(path[i - 1], path[i]);
    out.paths.push_back(path);
    out.scores.push_back(s);
    std::size_t pos = n;
    while (pos > 0) {
      --pos;
      if (static_cast<std::size_t>(++path[pos]) < tags) break;
      path[pos] = 0;
      if (pos == 0) return out;
    }
  }
}

inline long double brute_log_partition(const Enumerated& e) {
  long double m = -INFINITY;
  for (auto s : e.scores) m = std::max(m, s);
  long double acc = 0;
  for (auto s : e.scores) acc += std::exp(s - m);
  return m + std::log(acc);
}

inline long double brute_log_partition(const ScoreLattice& lat) { return brute_log_partition(enumerate_paths(lat)); }

// P(y_i = y) by summing path probabilities.
inline std::vector<std::vector<long double>> brute_unary(const ScoreLattice& lat) {
  auto e = enumerate_paths(lat);
  auto z = brute_log_partition(e);
  std::vector<std::vector<long double>> p(lat.length(), std::vector<long double>(lat.num_tags(), 0));
  for (std::size_t k = 0; k < e.paths.size(); ++k) {
    auto pr = std::exp(e.scores[k] - z);
    for (std::size_t i = 0; i < lat.length(); ++i) p[i][e.paths[k][i]] += pr;
  }
  return p;
}

inline double naive_emission(const EmbeddingMatrix& v, const CrfParams& p, std::size_t i, std::size_t y) {
  double acc = 0.0;
  for (std::size_t k = 0; k < v.dim(); ++k) acc += p.weights(y, k) * v.values(i, k);
  return acc + p.bias[y];
}

inline ScoreLattice random_lattice(std::mt19937_64& rng, std::size_t n, std::size_t tags, double lo = -2.0,
                                   double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  ScoreLattice lat{Matrix<double>(n, tags), Matrix<double>(tags, tags), std::vector<double>(tags),
                   std::vector<double>(tags)};
  for (auto& x : lat.emissions.values()) x = u(rng);
  for (auto& x : lat.transitions.values()) x = u(rng);
  for (auto& x : lat.start) x = u(rng);
  for (auto& x : lat.end) x = u(rng);
  return lat;
}

inline CrfParams random_params(std::mt19937_64& rng, std::size_t tags, std::size_t dim, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  auto p = CrfParams::zeros(tags, dim);
  p.for_each_block([&](const char*, std::span<double> v) {
    for (auto& x : v) x = u(rng);
  });
  return p;
}

inline EmbeddingMatrix random_embedding(std::mt19937_64& rng, std::size_t rows, std::size_t dim, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Matrix<double> m(rows, dim);
  for (auto& x : m.values()) x = u(rng);
  return EmbeddingMatrix(std::move(m));
}

inline TagSequence random_path(std::mt19937_64& rng, std::size_t n, std::size_t tags) {
  std::uniform_int_distribution<TagId> u(0, static_cast<TagId>(tags) - 1);
  TagSequence t(n);
  for (auto& x : t) x = u(rng);
  return t;
}

// Central differences of `f` w.r.t. every entry of every parameter block,
// in block order.
inline std::vector<double> finite_difference(CrfParams params, const std::function<double(const CrfParams&)>& f,
                                             double h = 1e-5) {
  std::vector<double> out;
  std::vector<std::span<double>> blocks;
  params.for_each_block([&](const char*, std::span<double> v) { blocks.push_back(v); });
  for (auto block : blocks) {
    for (auto& x : block) {
      const double saved = x;
      x = saved + h;
      const double up = f(params);
      x = saved - h;
      const double down = f(params);
      x = saved;
      out.push_back((up - down) / (2 * h));
    }
  }
  return out;
}

inline std::vector<double> flatten(const CrfParams& p) {
  std::vector<double> out;
  p.for_each_block([&](const char*, std::span<const double> v) { out.insert(out.end(), v.begin(), v.end()); });
  return out;
}

// |a - b| <= max(abs_floor, rel * max(|a|, |b|))
inline bool close(double a, double b, double rel, double abs_floor) {
  return std::abs(a - b) <= std::max(abs_floor, rel * std::max(std::abs(a), std::abs(b)));
}

// Elementwise mean accumulated in long double.
inline std::vector<long double> extended_mean(std::span<const EmbeddingMatrix> mats) {
  std::vector<long double> out(mats[0].values.size(), 0.0L);
  for (const auto& m : mats) {
    auto v = m.values.values();
    for (std::size_t e = 0; e < v.size(); ++e) out[e] += v[e];
  }
  for (auto& x : out) x /= static_cast<long double>(mats.size());
  return out;
}

// All disjoint span sets over n words with labels drawn from `labels`,
// by recursion on the first position.
inline void enumerate_span_sets(std::size_t n, const std::vector<std::string>& labels, std::size_t pos,
                                std::vector<EntitySpan>& cur, const std::function<void(const std::vector<EntitySpan>&)>& f) {
  if (pos >= n) {
    f(cur);
    return;
  }
  enumerate_span_sets(n, labels, pos + 1, cur, f);  // position left outside
  for (std::size_t end = pos + 1; end <= n; ++end) {
    for (const auto& l : labels) {
      cur.push_back({l, pos, end});
      enumerate_span_sets(n, labels, end, cur, f);
      cur.pop_back();
    }
  }
}

}  // namespace ensner::oracle
