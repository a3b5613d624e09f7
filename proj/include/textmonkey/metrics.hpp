// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Evaluation metrics: contains-accuracy, ANLS, entity F1, relaxed accuracy,
// text-spotting Trans/Pos scores and the language-model loss.

#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "textmonkey/error.hpp"
#include "textmonkey/grounding.hpp"
#include "textmonkey/numerics.hpp"

namespace textmonkey {

/// Lowercase, collapse whitespace runs to one space, trim, and strip
/// leading/trailing ASCII punctuation. Every metric normalizes through here.
inline std::string normalize_text(std::string_view s) {
  std::string collapsed;
  bool pending_space = false;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      pending_space = !collapsed.empty();
      continue;
    }
    if (pending_space) collapsed.push_back(' ');
    pending_space = false;
    collapsed.push_back(static_cast<char>(std::tolower(c)));
  }
  auto is_strip = [](char ch) {
    const auto c = static_cast<unsigned char>(ch);
    return std::ispunct(c) || std::isspace(c);
  };
  std::size_t b = 0, e = collapsed.size();
  while (b < e && is_strip(collapsed[b])) ++b;
  while (e > b && is_strip(collapsed[e - 1])) --e;
  return collapsed.substr(b, e - b);
}

inline std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> words;
  std::istringstream in{std::string(s)};
  std::string w;
  while (in >> w) {
    std::string n = normalize_text(w);
    if (!n.empty()) words.push_back(std::move(n));
  }
  return words;
}

struct EvalRecord {
  std::string id;
  std::string prediction;
  std::vector<std::string> ground_truths;
  /// Scores relaxed accuracy numerically when set; when unset, numeric
  /// scoring is used iff the ground truth parses as a number.
  std::optional<bool> numeric = std::nullopt;
};

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// Contains-accuracy

inline bool contains_correct(const EvalRecord& r) {
  const std::string pred = normalize_text(r.prediction);
  return std::any_of(r.ground_truths.begin(), r.ground_truths.end(), [&](const std::string& gt) {
    return pred.find(normalize_text(gt)) != std::string::npos;
  });
}

/// Fraction of records whose normalized prediction contains a normalized ground truth.
inline double contains_accuracy(const std::vector<EvalRecord>& records) {
  std::vector<double> scores;
  for (const auto& r : records) scores.push_back(contains_correct(r) ? 1.0 : 0.0);
  return mean_of(scores);
}

// ---------------------------------------------------------------------------
// ANLS

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline constexpr double kAnlsThreshold = 0.5;

/// 1 − dist/max(len), zeroed below the threshold. Two empty strings score 1.
inline double normalized_levenshtein_similarity(std::string_view pred, std::string_view gt,
                                                double threshold = kAnlsThreshold) {
  const std::string p = normalize_text(pred), g = normalize_text(gt);
  const std::size_t longest = std::max(p.size(), g.size());
  if (longest == 0) return 1.0;
  const double nls = 1.0 - static_cast<double>(edit_distance(p, g)) / static_cast<double>(longest);
  return nls >= threshold ? nls : 0.0;
}

inline double anls_record(const EvalRecord& r, double threshold = kAnlsThreshold) {
  double best = 0.0;
  for (const auto& gt : r.ground_truths) best = std::max(best, normalized_levenshtein_similarity(r.prediction, gt, threshold));
  return best;
}

inline double anls(const std::vector<EvalRecord>& records, double threshold = kAnlsThreshold) {
  std::vector<double> scores;
  for (const auto& r : records) scores.push_back(anls_record(r, threshold));
  return mean_of(scores);
}

// ---------------------------------------------------------------------------
// Entity F1

using Entity = std::pair<std::string, std::string>;

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct EntityCounts {
  std::size_t true_positive = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;

  EntityCounts& operator+=(const EntityCounts& o) {
    true_positive += o.true_positive;
    predicted += o.predicted;
    gold += o.gold;
    return *this;
  }

  PrecisionRecall score() const {
    if (predicted == 0 && gold == 0) return {1.0, 1.0, 1.0};
    PrecisionRecall pr;
    pr.precision = predicted ? static_cast<double>(true_positive) / static_cast<double>(predicted) : 0.0;
    pr.recall = gold ? static_cast<double>(true_positive) / static_cast<double>(gold) : 0.0;
    pr.f1 = (pr.precision + pr.recall) > 0.0 ? 2.0 * pr.precision * pr.recall / (pr.precision + pr.recall) : 0.0;
    return pr;
  }
};

/// Exact multiset matching on normalized (key, value) pairs.
inline EntityCounts entity_counts(const std::vector<Entity>& predicted, const std::vector<Entity>& gold) {
  std::map<Entity, std::size_t> remaining;
  for (const auto& [k, v] : gold) ++remaining[{normalize_text(k), normalize_text(v)}];
  EntityCounts c{0, predicted.size(), gold.size()};
  for (const auto& [k, v] : predicted) {
    auto it = remaining.find({normalize_text(k), normalize_text(v)});
    if (it != remaining.end() && it->second > 0) {
      --it->second;
      ++c.true_positive;
    }
  }
  return c;
}

inline PrecisionRecall entity_f1(const std::vector<Entity>& predicted, const std::vector<Entity>& gold) {
  return entity_counts(predicted, gold).score();
}

// ---------------------------------------------------------------------------
// Relaxed accuracy

inline constexpr double kRelaxedTolerance = 0.05;

/// Parses a plain number, allowing surrounding whitespace, thousands commas and a trailing '%'.
inline std::optional<double> parse_number(std::string_view s) {
  std::string t;
  for (char c : s)
    if (c != ',') t.push_back(c);
  auto b = t.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return std::nullopt;
  auto e = t.find_last_not_of(" \t\n\r");
  t = t.substr(b, e - b + 1);
  if (!t.empty() && t.back() == '%') t.pop_back();
  if (!t.empty() && t.front() == '+') t.erase(0, 1);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline bool relaxed_correct(const EvalRecord& r, double tolerance = kRelaxedTolerance) {
  for (const auto& gt : r.ground_truths) {
    const auto gt_num = parse_number(gt);
    const bool numeric = r.numeric.value_or(gt_num.has_value());
    if (numeric && gt_num) {
      const auto pred_num = parse_number(r.prediction);
      if (pred_num && std::abs(*pred_num - *gt_num) <= tolerance * std::abs(*gt_num)) return true;
    } else if (normalize_text(r.prediction) == normalize_text(gt)) {
      return true;
    }
  }
  return false;
}

inline double relaxed_accuracy(const std::vector<EvalRecord>& records, double tolerance = kRelaxedTolerance) {
  std::vector<double> scores;
  for (const auto& r : records) scores.push_back(relaxed_correct(r, tolerance) ? 1.0 : 0.0);
  return mean_of(scores);
}

// ---------------------------------------------------------------------------
// Text spotting

struct GroundTruthWord {
  std::string word;
  NormalizedBox box;
};

struct SpottingInstance {
  std::string predicted_text;                 // free text, used by Trans
  std::vector<GroundedSpan> predicted_spans;  // located words, used by Pos
  std::vector<GroundTruthWord> gt_words;
};

/// Builds an instance from model markup: spans are parsed out, and the
/// Trans text is the markup with tags and coordinates removed.
inline SpottingInstance spotting_instance_from_markup(std::string_view markup, std::vector<GroundTruthWord> gt) {
  SpottingInstance inst;
  inst.predicted_spans = parse_grounded(markup);
  std::string text;
  std::size_t pos = 0;
  while (pos < markup.size()) {
    if (markup.substr(pos, 5) == "<box>") {
      const auto end = markup.find("</box>", pos);
      pos = end == std::string_view::npos ? markup.size() : end + 6;
      text.push_back(' ');
      continue;
    }
    bool tag = false;
    for (auto t : {std::string_view("<ref>"), std::string_view("</ref>")}) {
      if (markup.substr(pos, t.size()) == t) {
        pos += t.size();
        text.push_back(' ');
        tag = true;
        break;
      }
    }
    if (!tag) text.push_back(markup[pos++]);
  }
  inst.predicted_text = std::move(text);
  inst.gt_words = std::move(gt);
  return inst;
}

struct MatchCount {
  std::size_t matched = 0;
  std::size_t total = 0;
  double fraction() const { return total ? static_cast<double>(matched) / static_cast<double>(total) : 0.0; }
};

/// Each ground-truth word consumes at most one occurrence among the predicted words.
inline MatchCount spotting_trans_count(const SpottingInstance& inst) {
  std::map<std::string, std::size_t> pool;
  for (auto& w : split_words(inst.predicted_text)) ++pool[w];
  MatchCount c{0, inst.gt_words.size()};
  for (const auto& g : inst.gt_words) {
    auto it = pool.find(normalize_text(g.word));
    if (it != pool.end() && it->second > 0) {
      --it->second;
      ++c.matched;
    }
  }
  return c;
}

inline double spotting_trans(const SpottingInstance& inst) { return spotting_trans_count(inst).fraction(); }

inline constexpr double kSpottingIou = 0.5;

/// Whether a predicted location agrees with a ground-truth box: IoU for
/// rectangles and polygon bounds, containment for points.
inline bool location_matches(const Location& loc, const NormalizedBox& gt, double min_iou = kSpottingIou) {
  if (const auto* b = std::get_if<NormalizedBox>(&loc)) return iou(*b, gt) >= min_iou;
  if (const auto* p = std::get_if<Polygon>(&loc)) return iou(p->bounds(), gt) >= min_iou;
  const auto& pt = std::get<NormalizedPoint>(loc);
  return pt.x >= gt.x1 && pt.x <= gt.x2 && pt.y >= gt.y1 && pt.y <= gt.y2;
}

/// Greedy one-to-one matching in ground-truth order: a word matches the
/// first unused predicted span with equal normalized text and agreeing location.
inline MatchCount spotting_pos_count(const SpottingInstance& inst, double min_iou = kSpottingIou) {
  std::vector<bool> used(inst.predicted_spans.size(), false);
  std::vector<std::string> texts;
  for (const auto& s : inst.predicted_spans) texts.push_back(normalize_text(s.text));
  MatchCount c{0, inst.gt_words.size()};
  for (const auto& g : inst.gt_words) {
    const std::string word = normalize_text(g.word);
    for (std::size_t i = 0; i < inst.predicted_spans.size(); ++i) {
      const auto& span = inst.predicted_spans[i];
      if (used[i] || !span.location || texts[i] != word) continue;
      if (!location_matches(*span.location, g.box, min_iou)) continue;
      used[i] = true;
      ++c.matched;
      break;
    }
  }
  return c;
}

inline double spotting_pos(const SpottingInstance& inst, double min_iou = kSpottingIou) {
  return spotting_pos_count(inst, min_iou).fraction();
}

// ---------------------------------------------------------------------------
// Language-model loss

/// Mean over positions of −log softmax(logits_i)[target_i].
inline double lm_loss(const Tensor& logits, const std::vector<std::size_t>& targets) {
  detail::require_rank(logits, 2, "lm_loss");
  if (targets.size() != logits.rows()) {
    throw DimensionError("lm_loss: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(logits.rows()) + " positions");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] >= logits.cols()) {
      throw ParameterError("lm_loss: target " + std::to_string(targets[i]) + " outside vocabulary of " +
                           std::to_string(logits.cols()));
    }
    const auto row = logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double v : row) sum += std::exp(v - mx);
    total += std::log(sum) + mx - row[targets[i]];
  }
  return total / static_cast<double>(targets.size());
}

}  // namespace textmonkey
