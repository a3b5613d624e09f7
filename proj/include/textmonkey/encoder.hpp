// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Windowed transformer encoder with Shifted Window Attention and
// zero-initialized low-rank adapters.
//
// The encoder sees the whole image as one [Hp×Wp×D] patch grid. Plain blocks
// attend inside fixed window_patches×window_patches tiles. Shifted blocks
// roll the grid toward the top-left by shift_size patches, attend inside the
// same tiling of the rolled grid under a mask that keeps wrapped-around
// regions apart, and roll back. A shifted block also carries an adapter
// branch h + (h·A)·B whose B starts at zero.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "textmonkey/archive.hpp"
#include "textmonkey/error.hpp"
#include "textmonkey/numerics.hpp"
#include "textmonkey/rng.hpp"

namespace textmonkey {

struct EncoderConfig {
  std::size_t depth = 2;
  std::size_t d_model = 64;
  std::size_t n_heads = 4;
  /// Block i (0-based) is shifted when (i + 1) % swa_interval == 0.
  std::size_t swa_interval = 4;
  std::size_t window_patches = 32;
  std::size_t shift_size = 16;
  std::size_t d_adapter = 16;
  std::size_t mlp_ratio = 4;

  void validate() const {
    if (d_model == 0) throw ConfigError("must be positive", "d_model");
    if (n_heads == 0 || d_model % n_heads) throw ConfigError("d_model must be divisible by n_heads", "n_heads");
    if (swa_interval == 0) throw ConfigError("must be positive", "swa_interval");
    if (window_patches == 0) throw ConfigError("must be positive", "window_patches");
    if (shift_size >= window_patches) throw ConfigError("must be smaller than window_patches", "shift_size");
    if (d_adapter == 0) throw ConfigError("must be positive", "d_adapter");
    if (mlp_ratio == 0) throw ConfigError("must be positive", "mlp_ratio");
  }

  bool is_swa_block(std::size_t index) const { return (index + 1) % swa_interval == 0; }
  std::size_t head_dim() const { return d_model / n_heads; }
};

struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct MlpWeights {
  Tensor fc1, b1, fc2, b2;
};

/// Low-rank residual branch x̂ ↦ x̂·A·B.
struct AdapterWeights {
  Tensor a;  // [d_model × d_adapter]
  Tensor b;  // [d_adapter × d_model]

  /// Gaussian A, zero B.
  static AdapterWeights zero_init(std::size_t d_model, std::size_t d_adapter, Rng& rng, double stddev = 0.02) {
    return {rng.normal({d_model, d_adapter}, stddev), Tensor::zeros({d_adapter, d_model})};
  }

  bool is_transparent() const {
    return std::all_of(b.data().begin(), b.data().end(), [](double v) { return v == 0.0; });
  }
};

struct BlockWeights {
  Tensor ln1_gamma, ln1_beta;
  AttentionWeights attn;
  Tensor ln2_gamma, ln2_beta;
  MlpWeights mlp;
  std::optional<AdapterWeights> adapter;
};

// ---------------------------------------------------------------------------
// Cyclic shift

/// out[i][j] = in[(i + shift) mod Hp][(j + shift) mod Wp].
inline Tensor cyclic_shift(const Tensor& grid, std::size_t shift) {
  detail::require_rank(grid, 3, "cyclic_shift");
  const std::size_t hp = grid.dim(0), wp = grid.dim(1), d = grid.dim(2);
  if (shift >= std::min(hp, wp)) throw ParameterError("cyclic_shift: shift must be smaller than the grid");
  if (shift == 0) return grid;
  Tensor out(grid.shape());
  for (std::size_t i = 0; i < hp; ++i)
    for (std::size_t j = 0; j < wp; ++j) {
      const std::size_t si = (i + shift) % hp, sj = (j + shift) % wp;
      std::copy_n(grid.data().begin() + static_cast<std::ptrdiff_t>((si * wp + sj) * d), d,
                  out.data().begin() + static_cast<std::ptrdiff_t>((i * wp + j) * d));
    }
  return out;
}

/// Undoes cyclic_shift.
inline Tensor inverse_cyclic_shift(const Tensor& grid, std::size_t shift) {
  detail::require_rank(grid, 3, "inverse_cyclic_shift");
  const std::size_t hp = grid.dim(0), wp = grid.dim(1), d = grid.dim(2);
  if (shift >= std::min(hp, wp)) throw ParameterError("inverse_cyclic_shift: shift must be smaller than the grid");
  if (shift == 0) return grid;
  Tensor out(grid.shape());
  for (std::size_t i = 0; i < hp; ++i)
    for (std::size_t j = 0; j < wp; ++j) {
      const std::size_t si = (i + shift) % hp, sj = (j + shift) % wp;
      std::copy_n(grid.data().begin() + static_cast<std::ptrdiff_t>((i * wp + j) * d), d,
                  out.data().begin() + static_cast<std::ptrdiff_t>((si * wp + sj) * d));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Shift mask

/// Attention mask for the shifted layout.
///
/// Every patch of the shifted grid gets a region label from a 3-band split
/// of each axis: [0, H−w), [H−w, H−s), [H−s, H) with w the window side and s
/// the shift. Two patches of the same window may attend to each other iff
/// their labels agree, i.e. they came from one contiguous pre-shift region.
class ShiftMask {
 public:
  ShiftMask(std::size_t hp, std::size_t wp, std::size_t window_patches, std::size_t shift)
      : hp_(hp), wp_(wp), side_(window_patches), shift_(shift), labels_(hp * wp, 0) {
    if (window_patches == 0 || hp % window_patches || wp % window_patches) {
      throw DimensionError("shift mask: grid " + std::to_string(hp) + "x" + std::to_string(wp) +
                           " is not a multiple of window " + std::to_string(window_patches));
    }
    if (shift >= window_patches) throw ParameterError("shift mask: shift must be smaller than the window");
    if (shift == 0) return;
    auto band = [&](std::size_t pos, std::size_t extent) -> int {
      if (pos < extent - side_) return 0;
      if (pos < extent - shift_) return 1;
      return 2;
    };
    for (std::size_t i = 0; i < hp; ++i)
      for (std::size_t j = 0; j < wp; ++j) labels_[i * wp + j] = band(i, hp) * 3 + band(j, wp);
  }

  std::size_t window_patches() const noexcept { return side_; }
  std::size_t shift() const noexcept { return shift_; }
  std::size_t window_rows() const noexcept { return hp_ / side_; }
  std::size_t window_cols() const noexcept { return wp_ / side_; }
  std::size_t window_count() const noexcept { return window_rows() * window_cols(); }
  std::size_t tokens_per_window() const noexcept { return side_ * side_; }

  int label(std::size_t i, std::size_t j) const { return labels_[i * wp_ + j]; }

  /// Additive [T×T] mask of window w (row-major window order).
  Tensor window(std::size_t w) const {
    const std::size_t t = tokens_per_window();
    const std::size_t r0 = (w / window_cols()) * side_, c0 = (w % window_cols()) * side_;
    std::vector<int> lab(t);
    for (std::size_t p = 0; p < t; ++p) lab[p] = label(r0 + p / side_, c0 + p % side_);
    Tensor m({t, t});
    for (std::size_t a = 0; a < t; ++a)
      for (std::size_t b = 0; b < t; ++b) m(a, b) = lab[a] == lab[b] ? 0.0 : kMaskSentinel;
    return m;
  }

  /// All windows as [n_windows×T×T].
  Tensor tensor() const {
    const std::size_t t = tokens_per_window();
    Tensor out({window_count(), t, t});
    for (std::size_t w = 0; w < window_count(); ++w) {
      const Tensor m = window(w);
      std::copy(m.data().begin(), m.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(w * t * t));
    }
    return out;
  }

  bool restricts() const noexcept { return shift_ != 0; }

 private:
  std::size_t hp_, wp_, side_, shift_;
  std::vector<int> labels_;
};

inline ShiftMask build_shift_mask(std::size_t hp, std::size_t wp, std::size_t window_patches, std::size_t shift) {
  return ShiftMask(hp, wp, window_patches, shift);
}

// ---------------------------------------------------------------------------
// Attention and blocks

/// Multi-head self-attention applied independently in every window tile.
inline Tensor window_attention(const Tensor& grid, const AttentionWeights& w, std::size_t n_heads,
                               const ShiftMask* mask, std::size_t window_patches) {
  detail::require_rank(grid, 3, "window_attention");
  const std::size_t hp = grid.dim(0), wp = grid.dim(1), d = grid.dim(2);
  if (window_patches == 0 || hp % window_patches || wp % window_patches) {
    throw DimensionError("window_attention: grid " + shape_string(grid.shape()) + " is not tiled by window " +
                         std::to_string(window_patches));
  }
  if (n_heads == 0 || d % n_heads) throw DimensionError("window_attention: width not divisible by heads");
  if (mask && (mask->window_patches() != window_patches || mask->window_rows() != hp / window_patches ||
               mask->window_cols() != wp / window_patches)) {
    throw DimensionError("window_attention: mask layout does not match the grid");
  }
  const std::size_t hd = d / n_heads, side = window_patches, wcols = wp / side;
  Tensor out(grid.shape());
  for (std::size_t wr = 0; wr < hp / side; ++wr)
    for (std::size_t wc = 0; wc < wcols; ++wc) {
      const Tensor x = extract_grid_window(grid, wr, wc, side);
      const Tensor q = add_bias(matmul(x, w.wq), w.bq);
      const Tensor k = add_bias(matmul(x, w.wk), w.bk);
      const Tensor v = add_bias(matmul(x, w.wv), w.bv);
      std::optional<Tensor> m;
      if (mask && mask->restricts()) m = mask->window(wr * wcols + wc);
      Tensor heads({x.rows(), d});
      for (std::size_t h = 0; h < n_heads; ++h) {
        const Tensor o = scaled_dot_attention(slice_cols(q, h * hd, hd), slice_cols(k, h * hd, hd),
                                              slice_cols(v, h * hd, hd), m ? &*m : nullptr);
        assign_cols(heads, h * hd, o);
      }
      const Tensor y = add_bias(matmul(heads, w.wo), w.bo);
      for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j)
          std::copy_n(y.row(i * side + j).begin(), d,
                      out.data().begin() + static_cast<std::ptrdiff_t>(((wr * side + i) * wp + wc * side + j) * d));
    }
  return out;
}

inline Tensor mlp_forward(const Tensor& x, const MlpWeights& w) {
  return add_bias(matmul(gelu(add_bias(matmul(x, w.fc1), w.b1)), w.fc2), w.b2);
}

/// h + (h·A)·B on every token.
inline Tensor apply_adapter(const Tensor& h, const AdapterWeights& adapter) {
  const Tensor flat = h.reshaped({h.rows(), h.cols()});
  return add(h, matmul(matmul(flat, adapter.a), adapter.b).reshaped(h.shape()));
}

/// One pre-norm transformer block over an [Hp×Wp×D] grid.
///
/// shift == 0 gives a plain windowed block. The adapter, when given, is
/// applied residually after the MLP.
inline Tensor transformer_block(const Tensor& grid, const EncoderConfig& cfg, const BlockWeights& w,
                                std::size_t shift, const AdapterWeights* adapter) {
  detail::require_rank(grid, 3, "transformer_block");
  if (grid.dim(2) != cfg.d_model) throw DimensionError("transformer_block: token width differs from d_model");
  Tensor a = layer_norm(grid, w.ln1_gamma, w.ln1_beta);
  Tensor attn;
  if (shift > 0) {
    const ShiftMask mask = build_shift_mask(grid.dim(0), grid.dim(1), cfg.window_patches, shift);
    attn = inverse_cyclic_shift(window_attention(cyclic_shift(a, shift), w.attn, cfg.n_heads, &mask, cfg.window_patches),
                                shift);
  } else {
    attn = window_attention(a, w.attn, cfg.n_heads, nullptr, cfg.window_patches);
  }
  Tensor h = add(grid, attn);
  const Tensor flat = layer_norm(h, w.ln2_gamma, w.ln2_beta).reshaped({h.rows(), h.cols()});
  h = add(h, mlp_forward(flat, w.mlp).reshaped(h.shape()));
  if (adapter) h = apply_adapter(h, *adapter);
  return h;
}

/// Shifted block: cyclic shift, masked window attention, inverse shift, MLP, adapter.
inline Tensor swa_block(const Tensor& grid, const EncoderConfig& cfg, const BlockWeights& w,
                        const AdapterWeights* adapter) {
  return transformer_block(grid, cfg, w, cfg.shift_size, adapter);
}

// ---------------------------------------------------------------------------
// Weights

struct EncoderWeights {
  std::vector<BlockWeights> blocks;

  static std::string tensor_name(std::size_t block, const char* group, const char* name) {
    return "block" + std::to_string(block) + "." + group + "." + name;
  }

  /// Seeded random weights. Shifted blocks get an adapter; its B is zero
  /// unless `zero_init_adapters` is false.
  static EncoderWeights random(const EncoderConfig& cfg, Rng& rng, bool zero_init_adapters = true) {
    cfg.validate();
    const std::size_t d = cfg.d_model, hidden = d * cfg.mlp_ratio;
    const double s = 0.02;
    EncoderWeights ew;
    for (std::size_t i = 0; i < cfg.depth; ++i) {
      BlockWeights b;
      b.ln1_gamma = Tensor({d}, 1.0);
      b.ln1_beta = Tensor::zeros({d});
      // 1/sqrt(d) for attention and the MLP input projection, 0.02 elsewhere.
      const double sa = 1.0 / std::sqrt(static_cast<double>(d));
      b.attn = {rng.normal({d, d}, sa), rng.normal({d}, s), rng.normal({d, d}, sa), rng.normal({d}, s),
                rng.normal({d, d}, sa), rng.normal({d}, s), rng.normal({d, d}, sa), rng.normal({d}, s)};
      b.ln2_gamma = Tensor({d}, 1.0);
      b.ln2_beta = Tensor::zeros({d});
      b.mlp = {rng.normal({d, hidden}, sa), rng.normal({hidden}, s), rng.normal({hidden, d}, s), rng.normal({d}, s)};
      if (cfg.is_swa_block(i)) {
        AdapterWeights ad = AdapterWeights::zero_init(d, cfg.d_adapter, rng, s);
        if (!zero_init_adapters) ad.b = rng.normal({cfg.d_adapter, d}, s);
        b.adapter = std::move(ad);
      }
      ew.blocks.push_back(std::move(b));
    }
    return ew;
  }

  void store(TensorArchive& ar) const {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const BlockWeights& b = blocks[i];
      ar.put(tensor_name(i, "attn", "ln_gamma"), b.ln1_gamma);
      ar.put(tensor_name(i, "attn", "ln_beta"), b.ln1_beta);
      ar.put(tensor_name(i, "attn", "wq"), b.attn.wq);
      ar.put(tensor_name(i, "attn", "bq"), b.attn.bq);
      ar.put(tensor_name(i, "attn", "wk"), b.attn.wk);
      ar.put(tensor_name(i, "attn", "bk"), b.attn.bk);
      ar.put(tensor_name(i, "attn", "wv"), b.attn.wv);
      ar.put(tensor_name(i, "attn", "bv"), b.attn.bv);
      ar.put(tensor_name(i, "attn", "wo"), b.attn.wo);
      ar.put(tensor_name(i, "attn", "bo"), b.attn.bo);
      ar.put(tensor_name(i, "mlp", "ln_gamma"), b.ln2_gamma);
      ar.put(tensor_name(i, "mlp", "ln_beta"), b.ln2_beta);
      ar.put(tensor_name(i, "mlp", "fc1"), b.mlp.fc1);
      ar.put(tensor_name(i, "mlp", "b1"), b.mlp.b1);
      ar.put(tensor_name(i, "mlp", "fc2"), b.mlp.fc2);
      ar.put(tensor_name(i, "mlp", "b2"), b.mlp.b2);
      if (b.adapter) {
        ar.put(tensor_name(i, "adapter", "a"), b.adapter->a);
        ar.put(tensor_name(i, "adapter", "b"), b.adapter->b);
      }
    }
  }

  /// Loads `cfg.depth` blocks; shifted blocks must provide an adapter.
  static EncoderWeights load(const TensorArchive& ar, const EncoderConfig& cfg) {
    cfg.validate();
    const std::size_t d = cfg.d_model, hidden = d * cfg.mlp_ratio;
    EncoderWeights ew;
    for (std::size_t i = 0; i < cfg.depth; ++i) {
      auto get = [&](const char* group, const char* name, const Shape& shape) {
        return ar.get(tensor_name(i, group, name), shape);
      };
      BlockWeights b;
      b.ln1_gamma = get("attn", "ln_gamma", {d});
      b.ln1_beta = get("attn", "ln_beta", {d});
      b.attn = {get("attn", "wq", {d, d}), get("attn", "bq", {d}), get("attn", "wk", {d, d}), get("attn", "bk", {d}),
                get("attn", "wv", {d, d}), get("attn", "bv", {d}), get("attn", "wo", {d, d}), get("attn", "bo", {d})};
      b.ln2_gamma = get("mlp", "ln_gamma", {d});
      b.ln2_beta = get("mlp", "ln_beta", {d});
      b.mlp = {get("mlp", "fc1", {d, hidden}), get("mlp", "b1", {hidden}), get("mlp", "fc2", {hidden, d}),
               get("mlp", "b2", {d})};
      if (cfg.is_swa_block(i)) {
        b.adapter = AdapterWeights{get("adapter", "a", {d, cfg.d_adapter}), get("adapter", "b", {cfg.d_adapter, d})};
      }
      ew.blocks.push_back(std::move(b));
    }
    return ew;
  }
};

struct EncodeOptions {
  /// When false every block runs unshifted (the plain windowed encoder).
  bool shifted_windows = true;
  /// When false adapters are skipped. Adapters only exist on shifted blocks,
  /// so they are also skipped when shifted_windows is false.
  bool adapters = true;
};

/// Runs the block stack over an [Hp×Wp×D] grid.
inline Tensor encode(const Tensor& grid, const EncoderConfig& cfg, const EncoderWeights& weights,
                     const EncodeOptions& opts = {}) {
  cfg.validate();
  if (weights.blocks.size() < cfg.depth) {
    throw LoadError("encoder weights hold " + std::to_string(weights.blocks.size()) + " blocks, config needs " +
                    std::to_string(cfg.depth));
  }
  Tensor x = grid;
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    const BlockWeights& b = weights.blocks[i];
    const bool shifted = opts.shifted_windows && cfg.is_swa_block(i) && cfg.shift_size > 0;
    const bool with_adapter = opts.adapters && opts.shifted_windows && cfg.is_swa_block(i) && b.adapter;
    const AdapterWeights* adapter = with_adapter ? &*b.adapter : nullptr;
    x = transformer_block(x, cfg, b, shifted ? cfg.shift_size : 0, adapter);
  }
  return x;
}

}  // namespace textmonkey
