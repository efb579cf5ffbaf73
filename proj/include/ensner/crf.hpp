// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Linear-chain CRF over word vectors.
//
// A tag path y_1..y_N for word vectors v_1..v_N scores
//
//   start[y_1] + sum_i (W_{y_i} . v_i + c[y_i]) + sum_{i>1} b[y_{i-1}, y_i] + end[y_N]
//
// and p(y | x) = exp(score(y) - logZ). Every dynamic program below runs in
// log space in double precision.

#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ensner/corpus.hpp"
#include "ensner/embed.hpp"
#include "ensner/error.hpp"
#include "ensner/matrix.hpp"

namespace ensner {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <std::floating_point Real>
Real log_sum_exp(std::span<const Real> xs) {
  Real m = -std::numeric_limits<Real>::infinity();
  for (Real x : xs) m = std::max(m, x);
  if (m == -std::numeric_limits<Real>::infinity()) return m;
  Real acc = 0;
  for (Real x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

// Model parameters; also reused as the gradient container.
struct CrfParams {
  Matrix<double> weights;        // L x d, row y is W_y
  std::vector<double> bias;      // L
  Matrix<double> transitions;    // L x L, [previous][next]
  std::vector<double> start;     // L
  std::vector<double> end;       // L

  static CrfParams zeros(std::size_t num_tags, std::size_t dim) {
    return {Matrix<double>(num_tags, dim), std::vector<double>(num_tags),
            Matrix<double>(num_tags, num_tags), std::vector<double>(num_tags),
            std::vector<double>(num_tags)};
  }

  // Glorot-uniform weights, everything else zero.
  template <typename Rng>
  static CrfParams glorot(std::size_t num_tags, std::size_t dim, Rng& rng) {
    auto p = zeros(num_tags, dim);
    const double limit = std::sqrt(6.0 / static_cast<double>(dim + num_tags));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& w : p.weights.values()) w = u(rng);
    return p;
  }

  std::size_t num_tags() const noexcept { return bias.size(); }
  std::size_t dim() const noexcept { return weights.cols(); }

  // Parameter blocks in serialization order.
  template <typename F>
  void for_each_block(F&& f) {
    f("weights", weights.values());
    f("bias", std::span<double>(bias));
    f("transitions", transitions.values());
    f("start", std::span<double>(start));
    f("end", std::span<double>(end));
  }
  template <typename F>
  void for_each_block(F&& f) const {
    f("weights", weights.values());
    f("bias", std::span<const double>(bias));
    f("transitions", transitions.values());
    f("start", std::span<const double>(start));
    f("end", std::span<const double>(end));
  }

  bool all_finite() const {
    bool ok = true;
    for_each_block([&](const char*, std::span<const double> v) {
      for (double x : v) ok = ok && std::isfinite(x);
    });
    return ok;
  }

  friend bool operator==(const CrfParams&, const CrfParams&) = default;
};

// Allowed tag transitions under BIO: I-y may only follow B-y or I-y, and
// may not start a sentence.
struct BioConstraints {
  Matrix<char> allowed;          // [previous][next]
  std::vector<char> allowed_start;

  explicit BioConstraints(std::size_t num_tags) : allowed(num_tags, num_tags, 1), allowed_start(num_tags, 1) {
    for (std::size_t next = 1; next < num_tags; ++next) {
      const auto t = static_cast<TagId>(next);
      if (!LabelSet::is_inside(t)) continue;
      allowed_start[next] = 0;
      for (std::size_t prev = 0; prev < num_tags; ++prev) {
        const auto p = static_cast<TagId>(prev);
        bool ok = p != LabelSet::kOutside &&
                  LabelSet::label_index_of_tag(p) == LabelSet::label_index_of_tag(t);
        allowed(prev, next) = ok ? 1 : 0;
      }
    }
  }
};

// Emission scores plus the (possibly masked) transition scores they are
// combined with.
struct ScoreLattice {
  Matrix<double> emissions;     // N x L
  Matrix<double> transitions;   // L x L
  std::vector<double> start;
  std::vector<double> end;

  std::size_t length() const noexcept { return emissions.rows(); }
  std::size_t num_tags() const noexcept { return emissions.cols(); }
};

inline ScoreLattice make_lattice(Matrix<double> emissions, const CrfParams& params,
                                 const BioConstraints* constraints = nullptr) {
  if (emissions.rows() == 0) throw DataError("lattice needs at least one position");
  if (emissions.cols() != params.num_tags()) throw DataError("emission width does not match tag count");
  ScoreLattice lat{std::move(emissions), params.transitions, params.start, params.end};
  if (constraints) {
    for (std::size_t p = 0; p < lat.num_tags(); ++p) {
      if (!constraints->allowed_start[p]) lat.start[p] = kNegInf;
      for (std::size_t n = 0; n < lat.num_tags(); ++n) {
        if (!constraints->allowed(p, n)) lat.transitions(p, n) = kNegInf;
      }
    }
  }
  return lat;
}

inline Matrix<double> emission_matrix(const EmbeddingMatrix& words, const CrfParams& params) {
  if (words.dim() != params.dim()) {
    throw DataError("embedding dim " + std::to_string(words.dim()) + " does not match model dim " +
                    std::to_string(params.dim()));
  }
  const auto n = words.rows();
  const auto tags = params.num_tags();
  Matrix<double> e(n, tags);
  for (std::size_t i = 0; i < n; ++i) {
    auto v = words.row(i);
    for (std::size_t y = 0; y < tags; ++y) {
      e(i, y) = dot(params.weights.row(y), v) + params.bias[y];
    }
  }
  return e;
}

inline ScoreLattice emission_scores(const EmbeddingMatrix& words, const CrfParams& params,
                                    const BioConstraints* constraints = nullptr) {
  return make_lattice(emission_matrix(words, params), params, constraints);
}

// alpha(i, y): log-sum of scores of all prefixes ending in tag y at i,
// including the emission at i.
inline Matrix<double> forward_scores(const ScoreLattice& lat) {
  const auto n = lat.length();
  const auto tags = lat.num_tags();
  Matrix<double> alpha(n, tags);
  for (std::size_t y = 0; y < tags; ++y) alpha(0, y) = lat.start[y] + lat.emissions(0, y);
  std::vector<double> work(tags);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < tags; ++y) {
      for (std::size_t p = 0; p < tags; ++p) work[p] = alpha(i - 1, p) + lat.transitions(p, y);
      alpha(i, y) = log_sum_exp<double>(work) + lat.emissions(i, y);
    }
  }
  return alpha;
}

// beta(i, y): log-sum of scores of all suffixes after i given tag y at i,
// including the end score.
inline Matrix<double> backward_scores(const ScoreLattice& lat) {
  const auto n = lat.length();
  const auto tags = lat.num_tags();
  Matrix<double> beta(n, tags);
  for (std::size_t y = 0; y < tags; ++y) beta(n - 1, y) = lat.end[y];
  std::vector<double> work(tags);
  for (std::size_t i = n - 1; i-- > 0;) {
    for (std::size_t p = 0; p < tags; ++p) {
      for (std::size_t y = 0; y < tags; ++y) {
        work[y] = lat.transitions(p, y) + lat.emissions(i + 1, y) + beta(i + 1, y);
      }
      beta(i, p) = log_sum_exp<double>(work);
    }
  }
  return beta;
}

inline double log_partition_from_forward(const ScoreLattice& lat, const Matrix<double>& alpha) {
  const auto last = lat.length() - 1;
  std::vector<double> work(lat.num_tags());
  for (std::size_t y = 0; y < work.size(); ++y) work[y] = alpha(last, y) + lat.end[y];
  return log_sum_exp<double>(work);
}

inline double log_partition(const ScoreLattice& lat) {
  return log_partition_from_forward(lat, forward_scores(lat));
}

// Same summation order as forward_scores, so a single-tag lattice gives
// score == logZ exactly.
inline double path_score(const ScoreLattice& lat, std::span<const TagId> path) {
  if (path.size() != lat.length()) {
    throw DataError("path length " + std::to_string(path.size()) + " does not match lattice length " +
                    std::to_string(lat.length()));
  }
  for (TagId t : path) {
    if (t < 0 || static_cast<std::size_t>(t) >= lat.num_tags()) throw DataError("tag id out of range");
  }
  double s = lat.start[path[0]] + lat.emissions(0, path[0]);
  for (std::size_t i = 1; i < path.size(); ++i) {
    s = s + lat.transitions(path[i - 1], path[i]) + lat.emissions(i, path[i]);
  }
  return s + lat.end[path.back()];
}

struct Marginals {
  double log_z = 0.0;
  Matrix<double> unary;          // N x L, P(y_i = y | x)
  Matrix<double> pair_totals;    // L x L, sum_i P(y_{i-1} = p, y_i = y | x)
};

inline Marginals marginals(const ScoreLattice& lat) {
  const auto n = lat.length();
  const auto tags = lat.num_tags();
  auto alpha = forward_scores(lat);
  auto beta = backward_scores(lat);
  Marginals m{log_partition_from_forward(lat, alpha), Matrix<double>(n, tags), Matrix<double>(tags, tags)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t y = 0; y < tags; ++y) m.unary(i, y) = std::exp(alpha(i, y) + beta(i, y) - m.log_z);
  }
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t p = 0; p < tags; ++p) {
      for (std::size_t y = 0; y < tags; ++y) {
        double lp = alpha(i - 1, p) + lat.transitions(p, y) + lat.emissions(i, y) + beta(i, y) - m.log_z;
        m.pair_totals(p, y) += std::exp(lp);
      }
    }
  }
  return m;
}

inline double nll_loss(const ScoreLattice& lat, std::span<const TagId> gold) {
  double loss = log_partition(lat) - path_score(lat, gold);
  return std::max(loss, 0.0);  // rounding can leave -1e-16
}

// Gradient of the negative log-likelihood w.r.t. the lattice scores.
struct LatticeGradients {
  double loss = 0.0;
  Matrix<double> emissions;      // N x L
  Matrix<double> transitions;    // L x L
  std::vector<double> start;
  std::vector<double> end;
};

inline LatticeGradients loss_gradients(const ScoreLattice& lat, std::span<const TagId> gold) {
  const auto score = path_score(lat, gold);
  auto m = marginals(lat);
  const auto n = lat.length();
  const auto tags = lat.num_tags();
  LatticeGradients g{std::max(m.log_z - score, 0.0), std::move(m.unary), std::move(m.pair_totals),
                     std::vector<double>(tags), std::vector<double>(tags)};
  for (std::size_t y = 0; y < tags; ++y) {
    g.start[y] = g.emissions(0, y);
    g.end[y] = g.emissions(n - 1, y);
  }
  g.start[gold[0]] -= 1.0;
  g.end[gold[n - 1]] -= 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    g.emissions(i, gold[i]) -= 1.0;
    if (i > 0) g.transitions(gold[i - 1], gold[i]) -= 1.0;
  }
  return g;
}

// Chain rule from lattice gradients to parameter gradients, accumulated
// into `grad`. When `input_grad` is given it receives d loss / d v_i.
inline void accumulate_param_gradients(const EmbeddingMatrix& words, const CrfParams& params,
                                       const LatticeGradients& g, CrfParams& grad,
                                       Matrix<double>* input_grad = nullptr) {
  const auto n = words.rows();
  const auto tags = params.num_tags();
  const auto dim = params.dim();
  for (std::size_t i = 0; i < n; ++i) {
    auto v = words.row(i);
    for (std::size_t y = 0; y < tags; ++y) {
      const double ge = g.emissions(i, y);
      grad.bias[y] += ge;
      auto gw = grad.weights.row(y);
      for (std::size_t k = 0; k < dim; ++k) gw[k] += ge * v[k];
    }
  }
  for (std::size_t p = 0; p < tags; ++p) {
    grad.start[p] += g.start[p];
    grad.end[p] += g.end[p];
    for (std::size_t y = 0; y < tags; ++y) grad.transitions(p, y) += g.transitions(p, y);
  }
  if (input_grad) {
    *input_grad = Matrix<double>(n, dim);
    for (std::size_t i = 0; i < n; ++i) {
      auto dv = input_grad->row(i);
      for (std::size_t y = 0; y < tags; ++y) {
        const double ge = g.emissions(i, y);
        auto w = params.weights.row(y);
        for (std::size_t k = 0; k < dim; ++k) dv[k] += ge * w[k];
      }
    }
  }
}

struct DecodeResult {
  TagSequence path;
  double score = 0.0;     // full path score, start and end included
  double log_prob = 0.0;  // score - logZ
};

// Ties go to the lowest tag id, both at the final position and at every
// backpointer.
inline DecodeResult viterbi(const ScoreLattice& lat) {
  const auto n = lat.length();
  const auto tags = lat.num_tags();
  Matrix<double> delta(n, tags);
  Matrix<std::size_t> back(n, tags);
  for (std::size_t y = 0; y < tags; ++y) delta(0, y) = lat.start[y] + lat.emissions(0, y);
  for (std::size_t i = 1; i < n; ++i) {
    for (std::size_t y = 0; y < tags; ++y) {
      std::size_t arg = 0;
      double best = delta(i - 1, 0) + lat.transitions(0, y);
      for (std::size_t p = 1; p < tags; ++p) {
        double s = delta(i - 1, p) + lat.transitions(p, y);
        if (s > best) {
          best = s;
          arg = p;
        }
      }
      delta(i, y) = best + lat.emissions(i, y);
      back(i, y) = arg;
    }
  }
  std::size_t arg = 0;
  double best = delta(n - 1, 0) + lat.end[0];
  for (std::size_t y = 1; y < tags; ++y) {
    double s = delta(n - 1, y) + lat.end[y];
    if (s > best) {
      best = s;
      arg = y;
    }
  }
  DecodeResult r;
  r.path.resize(n);
  r.path[n - 1] = static_cast<TagId>(arg);
  for (std::size_t i = n - 1; i > 0; --i) r.path[i - 1] = static_cast<TagId>(back(i, r.path[i]));
  r.score = path_score(lat, r.path);
  r.log_prob = std::min(r.score - log_partition(lat), 0.0);
  return r;
}

}  // namespace ensner
