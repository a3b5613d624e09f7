// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Token redundancy analysis: sampled pairwise similarity matrices and
// threshold sweeps over per-token maximum similarity.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "textmonkey/error.hpp"
#include "textmonkey/numerics.hpp"
#include "textmonkey/resampler.hpp"

namespace textmonkey {

/// `count` distinct indices from [0, population), ascending, reproducible per seed.
inline std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, std::uint64_t seed) {
  if (count > population) throw ParameterError("cannot sample " + std::to_string(count) + " of " +
                                               std::to_string(population) + " tokens");
  std::vector<std::size_t> all(population);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> out;
  out.reserve(count);
  std::mt19937_64 engine(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(out), count, engine);
  return out;
}

/// Pairwise cosine similarity of `sample` tokens drawn without replacement
/// (all tokens when unset), kept in their original order.
inline Tensor similarity_matrix(const Tensor& tokens, std::optional<std::size_t> sample = std::nullopt,
                                std::uint64_t seed = 0) {
  detail::require_rank(tokens, 2, "similarity_matrix");
  const std::size_t s = sample.value_or(tokens.rows());
  if (s == 0) throw ParameterError("similarity_matrix: sample size must be positive");
  const std::vector<std::size_t> idx = sample ? sample_indices(tokens.rows(), s, seed) : [&] {
    std::vector<std::size_t> v(tokens.rows());
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
  }();
  const Tensor picked = gather_rows(tokens, idx);
  const std::vector<double> norms = detail::token_norms(picked);
  Tensor m({s, s});
  for (std::size_t i = 0; i < s; ++i) {
    m(i, i) = 1.0;
    for (std::size_t j = i + 1; j < s; ++j) {
      const double c = std::clamp(dot(picked.row(i), picked.row(j)) / (norms[i] * norms[j]), -1.0, 1.0);
      m(i, j) = c;
      m(j, i) = c;
    }
  }
  return m;
}

struct RedundancyReport {
  std::string resolution_label;
  std::size_t token_count = 0;
  std::vector<double> thresholds;
  std::vector<std::size_t> redundant_counts;
  std::vector<double> max_similarities;

  double fraction(std::size_t k) const {
    return token_count ? static_cast<double>(redundant_counts.at(k)) / static_cast<double>(token_count) : 0.0;
  }
};

/// 0.50, 0.55, …, 0.95.
inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int k = 0; k < 10; ++k) t.push_back((50.0 + 5.0 * k) / 100.0);
  return t;
}

/// A token is redundant at threshold t when its max similarity to any other token is ≥ t.
inline RedundancyReport redundancy_sweep(const Tensor& tokens, const std::vector<double>& thresholds,
                                         std::string label = {}) {
  detail::require_rank(tokens, 2, "redundancy_sweep");
  if (tokens.rows() < 2) throw ParameterError("need at least two tokens");
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    if (!(thresholds[k] > 0.0 && thresholds[k] <= 1.0)) throw ParameterError("thresholds must lie in (0, 1]");
    if (k && thresholds[k] < thresholds[k - 1]) throw ParameterError("thresholds must be sorted ascending");
  }
  RedundancyReport report;
  report.resolution_label = std::move(label);
  report.token_count = tokens.rows();
  report.thresholds = thresholds;
  report.max_similarities = max_other_similarity(tokens);
  std::vector<double> sorted = report.max_similarities;
  std::sort(sorted.begin(), sorted.end());
  for (double t : thresholds) {
    const auto first = std::lower_bound(sorted.begin(), sorted.end(), t);
    report.redundant_counts.push_back(static_cast<std::size_t>(sorted.end() - first));
  }
  return report;
}

/// CSV text: header `threshold,count,fraction`, one row per threshold.
inline std::string format_report(const RedundancyReport& report) {
  if (report.redundant_counts.size() != report.thresholds.size()) {
    throw std::logic_error("redundancy report: counts and thresholds differ in length");
  }
  std::string out = "threshold,count,fraction\n";
  char buf[96];
  for (std::size_t k = 0; k < report.thresholds.size(); ++k) {
    if (k && report.redundant_counts[k] > report.redundant_counts[k - 1]) {
      throw std::logic_error("redundancy report: counts increase with threshold");
    }
    std::snprintf(buf, sizeof buf, "%.4f,%zu,%.4f\n", report.thresholds[k], report.redundant_counts[k],
                  report.fraction(k));
    out += buf;
  }
  return out;
}

inline void emit_report(const RedundancyReport& report, const std::string& path) {
  const std::string text = format_report(report);
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw IoError("failed writing '" + path + "'");
}

}  // namespace textmonkey
