// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end forward pass:
// resize → split → patchify → encode → per-window image resampler →
// assemble (windows, then global view) → token resampler.

#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <thread>
#include <vector>

#include "textmonkey/archive.hpp"
#include "textmonkey/config.hpp"
#include "textmonkey/encoder.hpp"
#include "textmonkey/resampler.hpp"
#include "textmonkey/rng.hpp"
#include "textmonkey/split.hpp"

namespace textmonkey {

struct PipelineWeights {
  Tensor patch_proj;  // [588×D]
  EncoderWeights encoder;
  ImageResamplerWeights image;
  TokenResamplerWeights token;

  static PipelineWeights random(const PipelineConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t d = cfg.encoder.d_model;
    PipelineWeights w;
    w.patch_proj = rng.normal({kPatchDim, d}, 1.0 / std::sqrt(static_cast<double>(kPatchDim)));
    w.encoder = EncoderWeights::random(cfg.encoder, rng, cfg.zero_init);
    w.image = ImageResamplerWeights::random(d, rng);
    w.token = TokenResamplerWeights::random(d, rng);
    return w;
  }

  TensorArchive to_archive() const {
    TensorArchive ar;
    ar.put("patch_embed.proj", patch_proj);
    encoder.store(ar);
    image.store(ar);
    token.store(ar);
    return ar;
  }

  static PipelineWeights load(const TensorArchive& ar, const PipelineConfig& cfg) {
    const std::size_t d = cfg.encoder.d_model;
    PipelineWeights w;
    w.patch_proj = ar.get("patch_embed.proj", {kPatchDim, d});
    w.encoder = EncoderWeights::load(ar, cfg.encoder);
    w.image = ImageResamplerWeights::load(ar, d);
    w.token = TokenResamplerWeights::load(ar, d);
    return w;
  }
};

/// Runs fn(i) for i in [0, n) on up to `threads` workers, static partition.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct ForwardResult {
  std::size_t windows = 0;
  std::size_t tokens_before = 0;  // L entering the token resampler
  std::size_t tokens_after = 0;
  TokenSet assembled;
  Tensor output;
  double wall_ms = 0.0;
};

inline ForwardResult forward(const RawImage& image, const PipelineConfig& cfg, const PipelineWeights& w,
                             std::size_t threads = 1) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  const RawImage resized = resize_image(image, cfg.resolution_h, cfg.resolution_w);
  const WindowGrid grid = split_windows(resized, cfg.normalization);
  const std::size_t n = grid.count();

  std::vector<PatchTokens> patches(n);
  parallel_for(n, threads, [&](std::size_t i) { patches[i] = patchify(grid.windows[i], w.patch_proj, i); });

  const EncodeOptions opts{.shifted_windows = cfg.shifted_windows, .adapters = true};
  const Tensor encoded = encode(assemble_patch_grid(patches, grid.rows, grid.cols), cfg.encoder, w.encoder, opts);

  // The global view goes through the plain (unshifted) encoder.
  const PatchTokens global_patches = patchify(grid.global_view, w.patch_proj, n);
  const Tensor global_grid = global_patches.tokens.reshaped({kPatchesPerSide, kPatchesPerSide, cfg.encoder.d_model});
  const Tensor global_encoded =
      encode(global_grid, cfg.encoder, w.encoder, {.shifted_windows = false, .adapters = false});

  std::vector<Tensor> features(n);
  parallel_for(n, threads, [&](std::size_t i) {
    features[i] = image_resample(extract_grid_window(encoded, i / grid.cols, i % grid.cols, kPatchesPerSide), w.image);
  });
  const Tensor global_features =
      image_resample(global_encoded.reshaped({kPatchesPerWindow, cfg.encoder.d_model}), w.image);

  ForwardResult result;
  result.windows = n;
  result.assembled = assemble_token_set(features, global_features);
  result.tokens_before = result.assembled.size();
  result.output = reduce_tokens(result.assembled, cfg.resolved_r(), w.token, cfg.reduction, cfg.seed);
  result.tokens_after = result.output.rows();
  result.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return result;
}

/// Token dump written by `forward --dump`.
inline TensorArchive dump_archive(const ForwardResult& r) {
  TensorArchive ar;
  ar.put("tokens.assembled", r.assembled.tokens);
  ar.put("tokens.resampled", r.output);
  return ar;
}

}  // namespace textmonkey
