// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// The two compression stages: a per-window image resampler (learned queries,
// 2D positional encodings) and the token resampler that keeps the r least
// redundant tokens and lets them query the full token set.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "textmonkey/archive.hpp"
#include "textmonkey/error.hpp"
#include "textmonkey/numerics.hpp"
#include "textmonkey/rng.hpp"

namespace textmonkey {

inline constexpr std::size_t kResamplerQueries = 256;
inline constexpr std::size_t kQueryGridSide = 16;
inline constexpr std::size_t kKeyGridSide = 32;

/// Factorized sinusoidal encoding of a rows×cols grid, one row per position
/// in row-major order.
///
/// Channels [0, D/2) encode the row index and [D/2, D) the column index. Each
/// half is [sin(p·ω_0) … sin(p·ω_{m−1}), cos(p·ω_0) … cos(p·ω_{m−1})] with
/// m = D/4 and ω_k = 10000^(−k/m).
inline Tensor pos_enc_2d(std::size_t rows, std::size_t cols, std::size_t d) {
  if (d == 0 || d % 4) throw ConfigError("positional encoding width " + std::to_string(d) + " is not divisible by 4");
  if (rows == 0 || cols == 0) throw ConfigError("positional encoding grid must be non-empty");
  const std::size_t half = d / 2, m = d / 4;
  Tensor out({rows * cols, d});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      auto row = out.row(r * cols + c);
      for (std::size_t k = 0; k < m; ++k) {
        const double omega = std::pow(10000.0, -static_cast<double>(k) / static_cast<double>(m));
        row[k] = std::sin(static_cast<double>(r) * omega);
        row[m + k] = std::cos(static_cast<double>(r) * omega);
        row[half + k] = std::sin(static_cast<double>(c) * omega);
        row[half + m + k] = std::cos(static_cast<double>(c) * omega);
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Image resampler

struct ImageResamplerWeights {
  Tensor queries;  // [256×D]
  Tensor wq, wk, wv, wo;
  Tensor pos_q;  // [256×D], 16×16 grid
  Tensor pos_k;  // [1024×D], 32×32 grid

  std::size_t width() const { return queries.cols(); }

  static ImageResamplerWeights random(std::size_t d, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    ImageResamplerWeights w;
    w.queries = rng.normal({kResamplerQueries, d}, 1.0);
    w.wq = rng.normal({d, d}, s);
    w.wk = rng.normal({d, d}, s);
    w.wv = rng.normal({d, d}, s);
    w.wo = rng.normal({d, d}, s);
    w.pos_q = round_to_f32(pos_enc_2d(kQueryGridSide, kQueryGridSide, d));
    w.pos_k = round_to_f32(pos_enc_2d(kKeyGridSide, kKeyGridSide, d));
    return w;
  }

  void store(TensorArchive& ar) const {
    ar.put("resampler.image.queries", queries);
    ar.put("resampler.image.wq", wq);
    ar.put("resampler.image.wk", wk);
    ar.put("resampler.image.wv", wv);
    ar.put("resampler.image.wo", wo);
    ar.put("resampler.image.pos_q", pos_q);
    ar.put("resampler.image.pos_k", pos_k);
  }

  static ImageResamplerWeights load(const TensorArchive& ar, std::size_t d) {
    ImageResamplerWeights w;
    w.queries = ar.get("resampler.image.queries", {kResamplerQueries, d});
    w.wq = ar.get("resampler.image.wq", {d, d});
    w.wk = ar.get("resampler.image.wk", {d, d});
    w.wv = ar.get("resampler.image.wv", {d, d});
    w.wo = ar.get("resampler.image.wo", {d, d});
    w.pos_q = ar.get("resampler.image.pos_q", {kResamplerQueries, d});
    w.pos_k = ar.get("resampler.image.pos_k", {kKeyGridSide * kKeyGridSide, d});
    return w;
  }
};

/// Cross-attention from the 256 learned queries onto one window's tokens.
/// Q = (queries + pos_q)·Wq, K = (tokens + pos_k)·Wk, V = tokens·Wv.
inline Tensor image_resample(const Tensor& window_tokens, const ImageResamplerWeights& w) {
  detail::require_rank(window_tokens, 2, "image_resample");
  if (window_tokens.shape() != w.pos_k.shape()) {
    throw DimensionError("image_resample: window tokens " + shape_string(window_tokens.shape()) +
                         " do not match key grid " + shape_string(w.pos_k.shape()));
  }
  const Tensor q = matmul(add(w.queries, w.pos_q), w.wq);
  const Tensor k = matmul(add(window_tokens, w.pos_k), w.wk);
  const Tensor v = matmul(window_tokens, w.wv);
  return matmul(scaled_dot_attention(q, k, v), w.wo);
}

// ---------------------------------------------------------------------------
// Token set

struct TokenOrigin {
  std::size_t window_id = 0;  // the global view uses window_id == number of windows
  std::size_t index = 0;      // position inside its window's feature block
  bool global = false;

  friend bool operator==(const TokenOrigin&, const TokenOrigin&) = default;
};

struct TokenSet {
  Tensor tokens;  // [L×D]
  std::vector<TokenOrigin> origin;

  std::size_t size() const noexcept { return origin.size(); }
};

/// Window features in row-major window order, then the global view.
inline TokenSet assemble_token_set(std::span<const Tensor> window_features, const Tensor& global_features) {
  if (window_features.empty()) throw ParameterError("assemble_token_set: need at least one window");
  std::vector<Tensor> parts(window_features.begin(), window_features.end());
  parts.push_back(global_features);
  TokenSet set;
  set.tokens = concat_rows(parts);
  for (std::size_t w = 0; w < parts.size(); ++w)
    for (std::size_t i = 0; i < parts[w].rows(); ++i)
      set.origin.push_back({w, i, w == window_features.size()});
  return set;
}

// ---------------------------------------------------------------------------
// Token filter

struct ImportanceRanking {
  std::vector<double> importances;    // 1 − max_{j≠i} cos(t_i, t_j), in [0, 2]
  std::vector<std::size_t> selected;  // r indices, ascending unless requested otherwise
};

enum class SelectionOrder {
  original,    // ascending token index
  importance,  // most important first
};

namespace detail {

inline std::vector<double> token_norms(const Tensor& tokens) {
  std::vector<double> norms(tokens.rows());
  for (std::size_t i = 0; i < tokens.rows(); ++i) {
    norms[i] = norm(tokens.row(i));
    if (norms[i] == 0.0) throw NumericError("zero-norm token at index " + std::to_string(i));
  }
  return norms;
}

}  // namespace detail

/// For every token, its largest cosine similarity to any other token.
inline std::vector<double> max_other_similarity(const Tensor& tokens) {
  detail::require_rank(tokens, 2, "max_other_similarity");
  const std::size_t n = tokens.rows();
  if (n < 2) throw ParameterError("need at least two tokens");
  const std::vector<double> norms = detail::token_norms(tokens);
  std::vector<double> best(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double c = std::clamp(dot(tokens.row(i), tokens.row(j)) / (norms[i] * norms[j]), -1.0, 1.0);
      best[i] = std::max(best[i], c);
      best[j] = std::max(best[j], c);
    }
  return best;
}

/// Keeps the r tokens least similar to the rest. Ties go to the lower index.
inline ImportanceRanking token_filter(const Tensor& tokens, std::size_t r,
                                      SelectionOrder order = SelectionOrder::original) {
  detail::require_rank(tokens, 2, "token_filter");
  const std::size_t n = tokens.rows();
  if (n < 2) throw ParameterError("token_filter needs at least two tokens");
  if (r == 0 || r > n) {
    throw ParameterError("token_filter: r = " + std::to_string(r) + " outside [1, " + std::to_string(n) + "]");
  }
  ImportanceRanking ranking;
  const std::vector<double> sim = max_other_similarity(tokens);
  ranking.importances.resize(n);
  std::transform(sim.begin(), sim.end(), ranking.importances.begin(), [](double s) { return 1.0 - s; });

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto& imp = ranking.importances;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(r), idx.end(),
                    [&](std::size_t a, std::size_t b) { return imp[a] > imp[b] || (imp[a] == imp[b] && a < b); });
  idx.resize(r);
  if (order == SelectionOrder::original) std::sort(idx.begin(), idx.end());
  ranking.selected = std::move(idx);
  return ranking;
}

// ---------------------------------------------------------------------------
// Token resampler

/// Single-head cross-attention projections.
struct TokenResamplerWeights {
  Tensor wq, wk, wv, wo;

  static TokenResamplerWeights identity(std::size_t d) {
    const Tensor i = Tensor::identity(d);
    return {i, i, i, i};
  }

  static TokenResamplerWeights random(std::size_t d, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    return {rng.normal({d, d}, s), rng.normal({d, d}, s), rng.normal({d, d}, s), rng.normal({d, d}, s)};
  }

  void store(TensorArchive& ar) const {
    ar.put("resampler.token.wq", wq);
    ar.put("resampler.token.wk", wk);
    ar.put("resampler.token.wv", wv);
    ar.put("resampler.token.wo", wo);
  }

  static TokenResamplerWeights load(const TensorArchive& ar, std::size_t d) {
    return {ar.get("resampler.token.wq", {d, d}), ar.get("resampler.token.wk", {d, d}),
            ar.get("resampler.token.wv", {d, d}), ar.get("resampler.token.wo", {d, d})};
  }
};

/// softmax((Q·Wq)(X·Wk)ᵀ/√D)(X·Wv)·Wo for arbitrary queries Q over all tokens X.
inline Tensor token_cross_attention(const Tensor& queries, const Tensor& tokens, const TokenResamplerWeights& w) {
  const Tensor q = matmul(queries, w.wq);
  const Tensor k = matmul(tokens, w.wk);
  const Tensor v = matmul(tokens, w.wv);
  return matmul(scaled_dot_attention(q, k, v), w.wo);
}

/// Filtered tokens (original order) query the whole set; returns [r×D].
inline Tensor token_resample(const TokenSet& set, std::size_t r, const TokenResamplerWeights& w) {
  const ImportanceRanking ranking = token_filter(set.tokens, r);
  return token_cross_attention(gather_rows(set.tokens, ranking.selected), set.tokens, w);
}

/// Token-reduction strategies, the default plus the ablation variants.
enum class TokenReduction {
  resample,          // filter, keep original order, cross-attend
  unsorted,          // filter, importance order, cross-attend
  random_queries,    // seeded random queries instead of filtered tokens, cross-attend
  filter_only,       // filtered tokens passed through without cross-attention
  none,              // no reduction
};

inline Tensor reduce_tokens(const TokenSet& set, std::size_t r, const TokenResamplerWeights& w, TokenReduction mode,
                            std::uint64_t seed = 0) {
  switch (mode) {
    case TokenReduction::resample:
      return token_resample(set, r, w);
    case TokenReduction::unsorted: {
      const ImportanceRanking ranking = token_filter(set.tokens, r, SelectionOrder::importance);
      return token_cross_attention(gather_rows(set.tokens, ranking.selected), set.tokens, w);
    }
    case TokenReduction::random_queries: {
      if (r == 0 || r > set.tokens.rows()) throw ParameterError("reduce_tokens: r out of range");
      Rng rng(seed);
      return token_cross_attention(rng.normal({r, set.tokens.cols()}, 1.0), set.tokens, w);
    }
    case TokenReduction::filter_only:
      return gather_rows(set.tokens, token_filter(set.tokens, r).selected);
    case TokenReduction::none:
      return set.tokens;
  }
  throw ParameterError("unknown token reduction mode");
}

}  // namespace textmonkey
