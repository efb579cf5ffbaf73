// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Library-level checks run in process against the
// brute-force oracles; end-to-end checks drive the ensner binary.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ensner/ensner.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace ensner;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
  Outcome r;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    r = check();
  } catch (const std::exception& e) {
    r = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!r.ok) ++failures;
  std::cout << (r.ok ? "PASS " : "FAIL ") << name << " (" << r.detail << "; " << secs << " s)" << std::endl;
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(3);
  os << x;
  return os.str();
}

Outcome partition_vs_enumeration() {
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::size_t count = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t tags = 1; tags <= 4; ++tags) {
      for (int rep = 0; rep < 10; ++rep, ++count) {
        auto lat = oracle::random_lattice(rng, n, tags, -2.0, 2.0);
        const double z = log_partition(lat);
        worst = std::max(worst, static_cast<double>(std::abs(z - oracle::brute_log_partition(lat))));
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {count >= 200 && worst <= 1e-8 && secs < 5.0,
          std::to_string(count) + " lattices, max |err| " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome viterbi_vs_enumeration() {
  std::mt19937_64 rng(102);
  double worst = 0.0;
  std::size_t count = 0, unique = 0, path_mismatch = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t tags = 1; tags <= 4; ++tags) {
      for (int rep = 0; rep < 10; ++rep, ++count) {
        auto lat = oracle::random_lattice(rng, n, tags, -2.0, 2.0);
        auto e = oracle::enumerate_paths(lat);
        std::size_t best = 0;
        long double second = -INFINITY;
        for (std::size_t k = 1; k < e.scores.size(); ++k) {
          if (e.scores[k] > e.scores[best]) {
            second = e.scores[best];
            best = k;
          } else {
            second = std::max(second, e.scores[k]);
          }
        }
        auto r = viterbi(lat);
        worst = std::max(worst, static_cast<double>(std::abs(r.score - e.scores[best])));
        if (e.scores.size() == 1 || e.scores[best] - second > 1e-9) {
          ++unique;
          if (r.path != e.paths[best]) ++path_mismatch;
        }
      }
    }
  }
  return {worst <= 1e-9 && path_mismatch == 0, std::to_string(count) + " lattices, max score err " + fmt(worst) +
                                                    ", " + std::to_string(path_mismatch) + "/" +
                                                    std::to_string(unique) + " unique-max paths differ"};
}

Outcome gradient_check() {
  std::mt19937_64 rng(103);
  std::size_t instances = 0, bad = 0, entries = 0;
  for (; instances < 60; ++instances) {
    const std::size_t n = 1 + rng() % 5, tags = 1 + rng() % 4, d = 1 + rng() % 6;
    auto params = oracle::random_params(rng, tags, d);
    auto v = oracle::random_embedding(rng, n, d);
    auto gold = oracle::random_path(rng, n, tags);
    auto grad = CrfParams::zeros(tags, d);
    accumulate_param_gradients(v, params, loss_gradients(emission_scores(v, params), gold), grad);
    auto fd = oracle::finite_difference(
        params,
        [&](const CrfParams& p) {
          auto lat = emission_scores(v, p);
          return log_partition(lat) - path_score(lat, gold);
        },
        1e-5);
    auto an = oracle::flatten(grad);
    if (an.size() != fd.size()) return {false, "gradient size mismatch"};
    for (std::size_t k = 0; k < an.size(); ++k, ++entries) {
      if (!oracle::close(an[k], fd[k], 1e-4, 1e-6)) ++bad;
    }
  }
  return {bad == 0, std::to_string(instances) + " instances, " + std::to_string(entries) + " entries over W, c, b, " +
                        "start, end; " + std::to_string(bad) + " outside tolerance"};
}

Outcome marginals_normalized() {
  std::mt19937_64 rng(104);
  double worst = 0.0;
  std::size_t count = 0;
  auto check = [&](const ScoreLattice& lat) {
    auto m = marginals(lat);
    for (std::size_t i = 0; i < lat.length(); ++i) {
      double s = 0.0;
      for (double p : m.unary.row(i)) s += p;
      worst = std::max(worst, std::abs(s - 1.0));
    }
    ++count;
  };
  // The oracle family, then longer chains with the full 13-tag set.
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t tags = 1; tags <= 4; ++tags) {
      for (int rep = 0; rep < 10; ++rep) check(oracle::random_lattice(rng, n, tags, -2.0, 2.0));
    }
  }
  for (int rep = 0; rep < 200; ++rep) check(oracle::random_lattice(rng, 1 + rng() % 40, 13, -5.0, 5.0));
  return {worst <= 1e-10, std::to_string(count) + " lattices, max |sum - 1| " + fmt(worst)};
}

Outcome bio_round_trip() {
  LabelSet labels({"A", "B"});
  std::size_t span_sets = 0, tag_seqs = 0, bad = 0;
  for (std::size_t n = 0; n <= 8; ++n) {
    std::vector<EntitySpan> cur;
    oracle::enumerate_span_sets(n, labels.labels(), 0, cur, [&](const std::vector<EntitySpan>& spans) {
      ++span_sets;
      auto tags = spans_to_bio(spans, n, labels);
      if (!is_valid_bio(tags) || bio_to_spans(tags, labels, BioMode::kStrict) != spans) ++bad;
    });
    if (n == 0) continue;
    TagSequence tags(n, 0);
    const auto t = static_cast<TagId>(labels.tag_count());
    while (true) {
      ++tag_seqs;
      if (is_valid_bio(tags)) {
        if (spans_to_bio(bio_to_spans(tags, labels, BioMode::kStrict), n, labels) != tags) ++bad;
      } else if (!is_valid_bio(spans_to_bio(bio_to_spans(tags, labels, BioMode::kRepair), n, labels))) {
        ++bad;
      }
      std::size_t pos = n;
      while (pos > 0 && ++tags[pos - 1] == t) tags[--pos] = 0;
      if (pos == 0) break;
    }
  }
  std::mt19937_64 rng(105);
  LabelSet six;
  std::size_t random_cases = 0;
  for (; random_cases < 10000; ++random_cases) {
    const std::size_t n = rng() % 65;
    std::vector<EntitySpan> spans;
    for (std::size_t i = 0; i < n;) {
      if (rng() % 3 != 0) {
        ++i;
        continue;
      }
      const std::size_t len = std::min<std::size_t>(1 + rng() % 5, n - i);
      spans.push_back({six.labels()[rng() % six.size()], i, i + len});
      i += len;
    }
    auto tags = spans_to_bio(spans, n, six);
    if (bio_to_spans(tags, six, BioMode::kStrict) != spans) ++bad;
  }
  return {bad == 0, std::to_string(span_sets) + " span sets and " + std::to_string(tag_seqs) +
                        " tag sequences (n <= 8), " + std::to_string(random_cases) + " random (n <= 64); " +
                        std::to_string(bad) + " mismatches"};
}

Outcome ensemble_precision_and_order() {
  std::mt19937_64 rng(106);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  std::size_t perm_bad = 0, ident_bad = 0, trials = 0;
  for (; trials < 500; ++trials) {
    const std::size_t k = 1 + rng() % 5, rows = 1 + rng() % 6, dim = 1 + rng() % 8;
    const double scale = std::pow(10.0, static_cast<double>(rng() % 7) - 3.0);
    std::vector<EmbeddingMatrix> mats;
    for (std::size_t m = 0; m < k; ++m) {
      Matrix<double> x(rows, dim);
      for (auto& v : x.values()) v = static_cast<float>(scale * normal(rng));
      mats.emplace_back(std::move(x));
    }
    auto avg = ensemble_average(mats);
    auto ref = oracle::extended_mean(mats);
    for (std::size_t e = 0; e < ref.size(); ++e) {
      worst = std::max(worst, static_cast<double>(std::abs(avg.values.values()[e] - ref[e])));
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    while (std::next_permutation(order.begin(), order.end())) {
      std::vector<EmbeddingMatrix> shuffled;
      for (auto i : order) shuffled.push_back(mats[i]);
      if (ensemble_average(shuffled).values != avg.values) ++perm_bad;
    }
    std::vector<EmbeddingMatrix> same(k, mats[0]);
    if (ensemble_average(same).values != mats[0].values) ++ident_bad;
  }
  return {worst <= 1e-7 && perm_bad == 0 && ident_bad == 0,
          std::to_string(trials) + " ensembles (k <= 5), max |err| " + fmt(worst) + ", " + std::to_string(perm_bad) +
              " permutation and " + std::to_string(ident_bad) + " identical-input mismatches"};
}

struct Env {
  fs::path cli;
  fs::path work;
};

int sh(const Env& env, const std::string& args, const std::string& log) {
  const auto cmd = "\"" + env.cli.string() + "\" " + args + " > \"" + (env.work / log).string() + "\" 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string train_args(const Env& env, const std::string& out) {
  const auto d = (env.work / "synth").string();
  return "train --data \"" + d + "/train.jsonl\" --dev \"" + d + "/dev.jsonl\" --emb-dir \"" + d + "/embs\" --out \"" +
         (env.work / out).string() + "\" --seed 7";
}

nlohmann::json read_report(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / "report.json")); }

Outcome end_to_end(const Env& env) {
  if (sh(env, "gen-synth --out \"" + (env.work / "synth").string() +
                  "\" --train 200 --dev 50 --dim 16 --sigma 0.05 --models 3 --seed 7",
         "gen.log") != 0) {
    return {false, "gen-synth failed"};
  }
  const auto t0 = std::chrono::steady_clock::now();
  if (sh(env, train_args(env, "run_a"), "run_a.log") != 0) return {false, "train failed, see run_a.log"};
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(env.work / "run_a/checkpoints")) ++files;
  const double f1 = read_report(env.work / "run_a")["best_dev_f1"].get<double>();

  double worst_single = 1.0;
  std::string singles;
  for (int k = 0; k < 3; ++k) {
    const auto name = "single" + std::to_string(k);
    if (sh(env, train_args(env, name) + " --models pseudo" + std::to_string(k), name + ".log") != 0) {
      return {false, "single-model train failed, see " + name + ".log"};
    }
    const double s = read_report(env.work / name)["best_dev_f1"].get<double>();
    worst_single = std::min(worst_single, s);
    singles += (k ? ", " : "") + fmt(s);
  }
  return {secs < 300.0 && files == 10 && f1 >= 0.95 && f1 >= worst_single,
          "train " + fmt(secs) + " s, " + std::to_string(files) + " checkpoints, best dev F1 " + fmt(f1) +
              ", single-model F1 " + singles};
}

Outcome reproducibility(const Env& env) {
  if (sh(env, train_args(env, "run_b"), "run_b.log") != 0) return {false, "second train failed"};
  const auto final_name = checkpoint_file_name(50);
  const bool same_final =
      slurp(env.work / "run_a/checkpoints" / final_name) == slurp(env.work / "run_b/checkpoints" / final_name);
  const bool same_best = slurp(env.work / "run_a/best.ckpt") == slurp(env.work / "run_b/best.ckpt");

  if (sh(env, train_args(env, "straight") + " --epochs 10", "straight.log") != 0) return {false, "10-epoch run failed"};
  if (sh(env, train_args(env, "resumed") + " --epochs 5", "resumed_1.log") != 0) return {false, "5-epoch run failed"};
  const auto half = (env.work / "resumed/checkpoints" / checkpoint_file_name(5)).string();
  if (sh(env, train_args(env, "resumed") + " --epochs 10 --resume \"" + half + "\"", "resumed_2.log") != 0) {
    return {false, "resume failed"};
  }
  const auto ten = checkpoint_file_name(10);
  const bool same_resume =
      slurp(env.work / "straight/checkpoints" / ten) == slurp(env.work / "resumed/checkpoints" / ten);
  return {same_final && same_best && same_resume,
          std::string("repeat run final checkpoint ") + (same_final ? "identical" : "differs") + ", best " +
              (same_best ? "identical" : "differs") + "; 5 + resume + 5 vs 10 " +
              (same_resume ? "identical" : "differs")};
}

Outcome retention(const Env& env) {
  std::vector<std::size_t> epochs;
  double max_f1 = -1.0;
  std::size_t argmax = 0;
  for (const auto& e : fs::directory_iterator(env.work / "run_a/checkpoints")) {
    auto ck = read_checkpoint(e.path());
    epochs.push_back(ck.epoch);
  }
  std::sort(epochs.begin(), epochs.end());
  for (auto ep : epochs) {
    auto ck = read_checkpoint(env.work / "run_a/checkpoints" / checkpoint_file_name(ep));
    if (ck.dev_f1 > max_f1) {
      max_f1 = ck.dev_f1;
      argmax = ep;
    }
  }
  std::vector<std::size_t> expect(10);
  std::iota(expect.begin(), expect.end(), std::size_t{41});
  auto best = read_checkpoint(env.work / "run_a/best.ckpt");
  auto rep = read_report(env.work / "run_a");
  const bool ok = epochs == expect && best.epoch == argmax && best.dev_f1 == max_f1 &&
                  rep["best_epoch"].get<std::size_t>() == argmax;
  std::string listed;
  for (auto ep : epochs) listed += (listed.empty() ? "" : ",") + std::to_string(ep);
  return {ok, "retained epochs " + listed + "; selected epoch " + std::to_string(best.epoch) + " (F1 " +
                  fmt(best.dev_f1) + "), max retained F1 " + fmt(max_f1) + " first at epoch " +
                  std::to_string(argmax)};
}

}  // namespace

int main(int argc, char** argv) {
  Env env;
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string key = argv[i];
    if (key == "--cli") env.cli = argv[i + 1];
    else if (key == "--workdir") env.work = argv[i + 1];
  }
  if (env.cli.empty() || env.work.empty()) {
    std::cerr << "usage: acceptance --cli <ensner binary> --workdir <scratch dir>\n";
    return 2;
  }
  fs::remove_all(env.work);
  fs::create_directories(env.work);

  report("log-partition matches enumeration", partition_vs_enumeration);
  report("viterbi matches enumerated argmax", viterbi_vs_enumeration);
  report("analytic gradients match finite differences", gradient_check);
  report("marginals normalize", marginals_normalized);
  report("BIO round trip", bio_round_trip);
  report("ensemble average precision and order invariance", ensemble_precision_and_order);
  report("end-to-end synthetic training", [&] { return end_to_end(env); });
  report("reproducible training and resume", [&] { return reproducibility(env); });
  report("checkpoint retention and best selection", [&] { return retention(env); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
