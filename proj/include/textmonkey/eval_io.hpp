// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Line-delimited JSON evaluation harness.
//
// Prediction lines: {"id": ..., "prediction": "..."}
// Ground-truth lines: {"id": ..., "ground_truths": ["..."], "boxes": [[x1,y1,x2,y2], ...]?,
//                      "numeric": bool?, "entities": [[key, value], ...]?}
//
// For the spotting metrics (trans, pos) the prediction is grounding markup
// and ground_truths[i] is a word located by boxes[i]. For f1, entities come
// from an "entities" field on either side; without one, each ground truth
// and each prediction line is read as "key: value".

#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "textmonkey/error.hpp"
#include "textmonkey/metrics.hpp"

namespace textmonkey {

struct JsonlRecord {
  std::string id;
  nlohmann::json body;
};

inline std::vector<JsonlRecord> read_jsonl(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::vector<JsonlRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("id")) throw ParameterError(path + ":" + std::to_string(lineno) + ": record has no id");
    const std::string id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    out.push_back({id, std::move(j)});
  }
  return out;
}

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"contains", "anls", "relaxed", "f1", "trans", "pos"};
  return names;
}

struct RecordDiagnostic {
  std::string id;
  double score = 0.0;
  std::string detail;
};

struct EvalSummary {
  std::string metric;
  std::size_t records = 0;
  double score = 0.0;
  std::vector<RecordDiagnostic> per_record;
};

namespace detail {

inline std::vector<Entity> entities_from(const nlohmann::json& body, const std::vector<std::string>& fallback) {
  std::vector<Entity> out;
  if (body.contains("entities")) {
    for (const auto& e : body["entities"]) {
      if (e.is_array() && e.size() == 2) out.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
      else if (e.is_object()) out.emplace_back(e.at("key").get<std::string>(), e.at("value").get<std::string>());
      else throw ParameterError("entity must be [key, value] or {key, value}");
    }
    return out;
  }
  for (const auto& s : fallback) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) out.emplace_back("", s);
    else out.emplace_back(s.substr(0, colon), s.substr(colon + 1));
  }
  return out;
}

inline std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == '\n' || c == ';') {
      if (!normalize_text(cur).empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!normalize_text(cur).empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

/// Scores aligned prediction/ground-truth files. Records are matched by id;
/// ids present on one side only raise an error listing them.
inline EvalSummary evaluate(const std::string& metric, const std::vector<JsonlRecord>& predictions,
                            const std::vector<JsonlRecord>& ground_truth) {
  if (std::find(metric_names().begin(), metric_names().end(), metric) == metric_names().end()) {
    std::string valid;
    for (const auto& n : metric_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ParameterError("unknown metric '" + metric + "' (valid: " + valid + ")");
  }
  std::map<std::string, const nlohmann::json*> pred_by_id;
  for (const auto& p : predictions) {
    if (!pred_by_id.emplace(p.id, &p.body).second) throw ParameterError("duplicate prediction id '" + p.id + "'");
  }
  std::set<std::string> gt_ids;
  std::vector<std::string> orphans;
  for (const auto& g : ground_truth) {
    if (!gt_ids.insert(g.id).second) throw ParameterError("duplicate ground-truth id '" + g.id + "'");
    if (!pred_by_id.count(g.id)) orphans.push_back("ground truth '" + g.id + "' has no prediction");
  }
  for (const auto& p : predictions)
    if (!gt_ids.count(p.id)) orphans.push_back("prediction '" + p.id + "' has no ground truth");
  if (!orphans.empty()) {
    std::string msg = "record ids do not align:";
    for (const auto& o : orphans) msg += "\n  " + o;
    throw ParameterError(msg);
  }

  EvalSummary summary;
  summary.metric = metric;
  summary.records = ground_truth.size();
  std::vector<double> scores;
  EntityCounts entity_total;
  MatchCount spot_total;
  for (const auto& g : ground_truth) {
    const nlohmann::json& pj = *pred_by_id.at(g.id);
    EvalRecord rec;
    try {
      rec.id = g.id;
      rec.prediction = pj.value("prediction", std::string());
      rec.ground_truths = g.body.value("ground_truths", std::vector<std::string>{});
      if (g.body.contains("numeric")) rec.numeric = g.body["numeric"].get<bool>();
    } catch (const nlohmann::json::exception& e) {
      throw ParameterError("record '" + g.id + "': " + e.what());
    }
    RecordDiagnostic diag{g.id, 0.0, {}};
    if (metric == "contains" || metric == "anls" || metric == "relaxed") {
      if (rec.ground_truths.empty()) throw ParameterError("record '" + g.id + "' has no ground truths");
      diag.score = metric == "contains" ? (contains_correct(rec) ? 1.0 : 0.0)
                   : metric == "anls"   ? anls_record(rec)
                                        : (relaxed_correct(rec) ? 1.0 : 0.0);
      diag.detail = "prediction=\"" + rec.prediction + "\" ground_truths=" + g.body["ground_truths"].dump();
      scores.push_back(diag.score);
    } else if (metric == "f1") {
      const auto gold = detail::entities_from(g.body, rec.ground_truths);
      const auto pred = detail::entities_from(pj, detail::lines_of(rec.prediction));
      const EntityCounts c = entity_counts(pred, gold);
      entity_total += c;
      diag.score = c.score().f1;
      diag.detail = "tp=" + std::to_string(c.true_positive) + " predicted=" + std::to_string(c.predicted) +
                    " gold=" + std::to_string(c.gold);
    } else {
      const auto boxes = g.body.value("boxes", std::vector<std::vector<int>>{});
      if (boxes.size() != rec.ground_truths.size()) {
        throw ParameterError("record '" + g.id + "': spotting needs one box per ground-truth word");
      }
      std::vector<GroundTruthWord> words;
      for (std::size_t i = 0; i < boxes.size(); ++i) {
        if (boxes[i].size() != 4) throw ParameterError("record '" + g.id + "': boxes are [x1,y1,x2,y2]");
        words.push_back({rec.ground_truths[i], {boxes[i][0], boxes[i][1], boxes[i][2], boxes[i][3]}});
      }
      const SpottingInstance inst = spotting_instance_from_markup(rec.prediction, std::move(words));
      const MatchCount c = metric == "trans" ? spotting_trans_count(inst) : spotting_pos_count(inst);
      spot_total.matched += c.matched;
      spot_total.total += c.total;
      diag.score = c.fraction();
      diag.detail = "matched=" + std::to_string(c.matched) + "/" + std::to_string(c.total);
    }
    summary.per_record.push_back(std::move(diag));
  }
  if (metric == "f1") summary.score = entity_total.score().f1;
  else if (metric == "trans" || metric == "pos") summary.score = spot_total.fraction();
  else summary.score = mean_of(scores);
  return summary;
}

}  // namespace textmonkey
