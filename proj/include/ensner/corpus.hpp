// Copyright 2026 The ensner Authors
// SPDX-License-Identifier: Apache-2.0

// Datasets, the entity label set, and the BIO tag scheme.

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "ensner/error.hpp"

namespace ensner {

using TagId = std::int32_t;
using TagSequence = std::vector<TagId>;

inline const std::vector<std::string>& default_labels() {
  static const std::vector<std::string> labels = {"LIMIT",    "CONST_DIR", "VAR",
                                                  "PARAM",    "OBJ_NAME",  "OBJ_DIR"};
  return labels;
}

// Ordered entity types. Tag ids: O = 0, then B-y = 1 + 2k, I-y = 2 + 2k for
// the k-th label. The ordering is part of the checkpoint format.
class LabelSet {
 public:
  static constexpr TagId kOutside = 0;

  LabelSet() : LabelSet(default_labels()) {}

  explicit LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
    if (labels_.empty()) throw std::invalid_argument("LabelSet: no labels");
    for (std::size_t k = 0; k < labels_.size(); ++k) {
      if (labels_[k].empty()) throw std::invalid_argument("LabelSet: empty label name");
      if (!index_.emplace(labels_[k], static_cast<int>(k)).second) {
        throw std::invalid_argument("LabelSet: duplicate label '" + labels_[k] + "'");
      }
    }
  }

  // Parses "A,B,C"; surrounding whitespace is trimmed.
  static LabelSet from_csv(std::string_view csv) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in{std::string(csv)};
    while (std::getline(in, item, ',')) {
      auto b = item.find_first_not_of(" \t");
      auto e = item.find_last_not_of(" \t");
      out.push_back(b == std::string::npos ? std::string{} : item.substr(b, e - b + 1));
    }
    return LabelSet(std::move(out));
  }

  const std::vector<std::string>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t tag_count() const noexcept { return 2 * labels_.size() + 1; }

  bool contains(std::string_view label) const { return index_.count(std::string(label)) != 0; }

  int index_of(std::string_view label) const {
    auto it = index_.find(std::string(label));
    if (it == index_.end()) throw DataError("unknown label '" + std::string(label) + "'");
    return it->second;
  }

  TagId begin_tag(std::string_view label) const { return 1 + 2 * index_of(label); }
  TagId inside_tag(std::string_view label) const { return 2 + 2 * index_of(label); }

  static bool is_begin(TagId t) noexcept { return t > 0 && t % 2 == 1; }
  static bool is_inside(TagId t) noexcept { return t > 0 && t % 2 == 0; }
  static int label_index_of_tag(TagId t) noexcept { return (t - 1) / 2; }

  const std::string& label_of_tag(TagId t) const { return labels_.at(label_index_of_tag(t)); }

  std::string tag_name(TagId t) const {
    if (t == kOutside) return "O";
    return (is_begin(t) ? "B-" : "I-") + label_of_tag(t);
  }

  TagId tag_from_name(std::string_view name) const {
    if (name == "O") return kOutside;
    if (name.size() > 2 && name[1] == '-') {
      if (name[0] == 'B') return begin_tag(name.substr(2));
      if (name[0] == 'I') return inside_tag(name.substr(2));
    }
    throw DataError("bad tag name '" + std::string(name) + "'");
  }

  friend bool operator==(const LabelSet& a, const LabelSet& b) { return a.labels_ == b.labels_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
};

struct EntitySpan {
  std::string label;
  std::size_t start = 0;  // inclusive word index
  std::size_t end = 0;    // exclusive word index

  friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

struct Sentence {
  std::string id;
  std::vector<std::string> words;
  std::vector<EntitySpan> spans;
  std::optional<std::string> domain;

  friend bool operator==(const Sentence&, const Sentence&) = default;
};

// Checks bounds, label membership and pairwise disjointness. Spans are
// sorted by start on return.
inline void validate_spans(std::vector<EntitySpan>& spans, std::size_t n, const LabelSet& labels) {
  for (const auto& s : spans) {
    if (!labels.contains(s.label)) throw DataError("unknown label '" + s.label + "'");
    if (s.start >= s.end || s.end > n) {
      throw DataError("span out of bounds: " + s.label + " [" + std::to_string(s.start) + "," +
                      std::to_string(s.end) + ") for length " + std::to_string(n));
    }
  }
  std::sort(spans.begin(), spans.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  for (std::size_t k = 1; k < spans.size(); ++k) {
    if (spans[k].start < spans[k - 1].end) {
      throw DataError("overlapping spans at word " + std::to_string(spans[k].start));
    }
  }
}

inline TagSequence spans_to_bio(std::vector<EntitySpan> spans, std::size_t n, const LabelSet& labels) {
  validate_spans(spans, n, labels);
  TagSequence tags(n, LabelSet::kOutside);
  for (const auto& s : spans) {
    tags[s.start] = labels.begin_tag(s.label);
    for (std::size_t i = s.start + 1; i < s.end; ++i) tags[i] = labels.inside_tag(s.label);
  }
  return tags;
}

enum class BioMode { kRepair, kStrict };

// I-y is valid only after B-y or I-y.
inline bool is_valid_bio(std::span<const TagId> tags) {
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (!LabelSet::is_inside(tags[i])) continue;
    if (i == 0) return false;
    TagId prev = tags[i - 1];
    if (prev == LabelSet::kOutside ||
        LabelSet::label_index_of_tag(prev) != LabelSet::label_index_of_tag(tags[i])) {
      return false;
    }
  }
  return true;
}

// In repair mode a dangling I-y opens a new span, as if it were B-y.
inline std::vector<EntitySpan> bio_to_spans(std::span<const TagId> tags, const LabelSet& labels,
                                            BioMode mode = BioMode::kRepair) {
  std::vector<EntitySpan> spans;
  int open = -1;  // label index of the span being extended
  for (std::size_t i = 0; i < tags.size(); ++i) {
    TagId t = tags[i];
    if (t < 0 || static_cast<std::size_t>(t) >= labels.tag_count()) {
      throw DataError("tag id " + std::to_string(t) + " outside the tag vocabulary");
    }
    if (t == LabelSet::kOutside) {
      open = -1;
      continue;
    }
    int k = LabelSet::label_index_of_tag(t);
    if (LabelSet::is_inside(t) && open == k) {
      spans.back().end = i + 1;
      continue;
    }
    if (LabelSet::is_inside(t) && mode == BioMode::kStrict) {
      throw DataError("dangling " + labels.tag_name(t) + " at position " + std::to_string(i));
    }
    spans.push_back({labels.labels()[k], i, i + 1});
    open = k;
  }
  return spans;
}

namespace detail {

inline Sentence sentence_from_json(const nlohmann::json& j, const LabelSet& labels) {
  Sentence s;
  s.id = j.at("id").get<std::string>();
  s.words = j.at("words").get<std::vector<std::string>>();
  if (s.words.empty()) throw DataError("sentence '" + s.id + "' has no words");
  for (const auto& w : s.words) {
    if (w.empty()) throw DataError("sentence '" + s.id + "' contains an empty word");
  }
  if (j.contains("spans")) {
    for (const auto& js : j.at("spans")) {
      auto start = js.at("start").get<std::int64_t>();
      auto end = js.at("end").get<std::int64_t>();
      if (start < 0 || end < 0) throw DataError("span out of bounds: negative index");
      s.spans.push_back({js.at("label").get<std::string>(), static_cast<std::size_t>(start),
                         static_cast<std::size_t>(end)});
    }
  }
  if (j.contains("domain") && !j.at("domain").is_null()) s.domain = j.at("domain").get<std::string>();
  validate_spans(s.spans, s.words.size(), labels);
  return s;
}

}  // namespace detail

inline nlohmann::json to_json(const Sentence& s) {
  nlohmann::json spans = nlohmann::json::array();
  for (const auto& sp : s.spans) {
    spans.push_back({{"label", sp.label}, {"start", sp.start}, {"end", sp.end}});
  }
  nlohmann::json j = {{"id", s.id}, {"words", s.words}, {"spans", std::move(spans)}};
  if (s.domain) j["domain"] = *s.domain;
  return j;
}

// One JSON object per line; blank lines are skipped. Errors carry the
// 1-based line number.
inline std::vector<Sentence> parse_dataset(std::istream& in, const LabelSet& labels) {
  std::vector<Sentence> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back(detail::sentence_from_json(j, labels));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(lineno) + ": malformed record: " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!seen.insert(out.back().id).second) {
      throw DataError("line " + std::to_string(lineno) + ": duplicate sentence id '" + out.back().id + "'");
    }
  }
  return out;
}

inline void write_dataset(std::ostream& out, std::span<const Sentence> sentences) {
  for (const auto& s : sentences) out << to_json(s).dump() << '\n';
}

}  // namespace ensner
