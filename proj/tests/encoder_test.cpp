// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "oracles/oracles.hpp"
#include "textmonkey/encoder.hpp"

namespace txm = textmonkey;
using txm::Tensor;

namespace {

txm::EncoderConfig small_config(std::size_t depth, std::size_t shift, std::size_t interval = 2) {
  txm::EncoderConfig cfg;
  cfg.depth = depth;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.swa_interval = interval;
  cfg.window_patches = 2;
  cfg.shift_size = shift;
  cfg.d_adapter = 4;
  cfg.mlp_ratio = 2;
  return cfg;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool patch_changed(const Tensor& a, const Tensor& b, std::size_t i, std::size_t j) {
  for (std::size_t c = 0; c < a.dim(2); ++c)
    if (a(i, j, c) != b(i, j, c)) return true;
  return false;
}

}  // namespace

TEST(CyclicShift, ZeroShiftIsIdentity) {
  txm::Rng rng(1);
  const Tensor g = rng.normal({4, 6, 3}, 1.0);
  EXPECT_EQ(txm::cyclic_shift(g, 0), g);
}

TEST(CyclicShift, TwoByTwoByHand) {
  const Tensor g({2, 2, 1}, std::vector<double>{1, 2, 3, 4});  // [[a, b], [c, d]]
  EXPECT_EQ(txm::cyclic_shift(g, 1), Tensor({2, 2, 1}, std::vector<double>{4, 3, 2, 1}));
}

TEST(CyclicShift, InverseRestoresBitExactly) {
  txm::Rng rng(2);
  for (std::size_t s = 0; s < 4; ++s) {
    const Tensor g = rng.normal({4, 8, 5}, 3.0);
    EXPECT_EQ(txm::inverse_cyclic_shift(txm::cyclic_shift(g, s), s), g);
    EXPECT_EQ(txm::cyclic_shift(txm::inverse_cyclic_shift(g, s), s), g);
  }
}

TEST(CyclicShift, ShiftTooLargeRaises) {
  EXPECT_THROW(txm::cyclic_shift(Tensor::zeros({4, 4, 1}), 4), txm::ParameterError);
}

TEST(ShiftMask, ZeroShiftDoesNotRestrict) {
  const txm::ShiftMask m = txm::build_shift_mask(4, 4, 2, 0);
  EXPECT_FALSE(m.restricts());
  EXPECT_EQ(m.tensor(), Tensor::zeros({4, 4, 4}));
}

TEST(ShiftMask, BottomRightWindowOnlyAllowsSelf) {
  const txm::ShiftMask m = txm::build_shift_mask(4, 4, 2, 1);
  const Tensor w = m.window(3);
  std::size_t zeros = 0;
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) {
      if (w(a, b) == 0.0) {
        ++zeros;
        EXPECT_EQ(a, b);
      } else {
        EXPECT_EQ(w(a, b), txm::kMaskSentinel);
      }
    }
  EXPECT_EQ(zeros, 4u);
  // The top-left window lies in one region.
  EXPECT_EQ(m.window(0), Tensor::zeros({4, 4}));
}

TEST(ShiftMask, DiagonalAlwaysOpen) {
  for (auto [h, w, side, s] : {std::array<std::size_t, 4>{8, 8, 4, 2}, {6, 9, 3, 1}, {32, 64, 32, 16}}) {
    const txm::ShiftMask m(h, w, side, s);
    for (std::size_t k = 0; k < m.window_count(); ++k) {
      const Tensor mk = m.window(k);
      for (std::size_t t = 0; t < m.tokens_per_window(); ++t) ASSERT_EQ(mk(t, t), 0.0);
    }
  }
}

TEST(ShiftMask, RejectsUntiledGrid) {
  EXPECT_THROW(txm::build_shift_mask(5, 4, 2, 1), txm::DimensionError);
  EXPECT_THROW(txm::build_shift_mask(4, 4, 2, 2), txm::ParameterError);
}

TEST(WindowAttention, SingleWindowEqualsGlobalAttention) {
  txm::Rng rng(3);
  const auto w = txm::EncoderWeights::random(small_config(1, 0), rng).blocks[0].attn;
  const Tensor grid = rng.normal({2, 2, 16}, 1.0);
  const Tensor got = txm::window_attention(grid, w, 2, nullptr, 2);
  const auto ref = oracle::self_attention(oracle::rows_of(grid), w, 2);
  EXPECT_LT(max_abs_diff(got, oracle::grid_of(ref, 2, 2)), 1e-12);
}

TEST(WindowAttention, UniformLogitsAverageWithinWindowOnly) {
  const std::size_t d = 2;
  txm::AttentionWeights w{Tensor::zeros({d, d}), Tensor::zeros({d}), Tensor::zeros({d, d}), Tensor::zeros({d}),
                          Tensor::identity(d),   Tensor::zeros({d}), Tensor::identity(d),   Tensor::zeros({d})};
  Tensor grid({2, 4, d});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      grid(i, j, 0) = static_cast<double>(i * 4 + j);
      grid(i, j, 1) = j < 2 ? 1.0 : -1.0;
    }
  const Tensor out = txm::window_attention(grid, w, 1, nullptr, 2);
  // Left window holds 0, 1, 4, 5; right window 2, 3, 6, 7.
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_NEAR(out(i, j, 0), j < 2 ? 2.5 : 4.5, 1e-12);
      EXPECT_NEAR(out(i, j, 1), j < 2 ? 1.0 : -1.0, 1e-12);
    }
}

TEST(WindowAttention, SelfOnlyMaskReturnsOwnValue) {
  txm::Rng rng(4);
  auto w = txm::EncoderWeights::random(small_config(1, 0), rng).blocks[0].attn;
  const Tensor grid = rng.normal({4, 4, 16}, 1.0);
  const txm::ShiftMask mask(4, 4, 2, 1);
  const Tensor out = txm::window_attention(grid, w, 2, &mask, 2);
  for (std::size_t i = 2; i < 4; ++i)
    for (std::size_t j = 2; j < 4; ++j) {
      Tensor x({1, 16});
      for (std::size_t c = 0; c < 16; ++c) x(0, c) = grid(i, j, c);
      const Tensor v = txm::add_bias(txm::matmul(txm::add_bias(txm::matmul(x, w.wv), w.bv), w.wo), w.bo);
      for (std::size_t c = 0; c < 16; ++c) EXPECT_NEAR(out(i, j, c), v(0, c), 1e-12);
    }
}

TEST(WindowAttention, MaskedLayoutMatchesRegionOracle) {
  txm::Rng rng(5);
  for (auto [h, w, side, s] : {std::array<std::size_t, 4>{4, 4, 2, 1}, {8, 12, 4, 2}, {6, 6, 3, 1}}) {
    const auto aw = txm::EncoderWeights::random(small_config(1, 0), rng).blocks[0].attn;
    const Tensor shifted = txm::cyclic_shift(rng.normal({h, w, 16}, 1.0), s);
    const txm::ShiftMask mask(h, w, side, s);
    const Tensor got = txm::window_attention(shifted, aw, 2, &mask, side);
    EXPECT_LT(max_abs_diff(got, oracle::region_attention(shifted, aw, 2, side, s)), 1e-9);
  }
}

TEST(SwaBlock, ZeroAdapterIsTransparent) {
  txm::Rng rng(6);
  const auto cfg = small_config(2, 1);
  const auto ew = txm::EncoderWeights::random(cfg, rng, true);
  const auto& b = ew.blocks[1];
  ASSERT_TRUE(b.adapter && b.adapter->is_transparent());
  const Tensor g = rng.normal({4, 4, 16}, 1.0);
  EXPECT_EQ(txm::swa_block(g, cfg, b, &*b.adapter), txm::swa_block(g, cfg, b, nullptr));
}

TEST(SwaBlock, NonZeroAdapterChangesOutput) {
  txm::Rng rng(7);
  const auto cfg = small_config(2, 1);
  const auto ew = txm::EncoderWeights::random(cfg, rng, false);
  const auto& b = ew.blocks[1];
  const Tensor g = rng.normal({4, 4, 16}, 1.0);
  const Tensor plain = txm::swa_block(g, cfg, b, nullptr);
  const Tensor adapted = txm::swa_block(g, cfg, b, &*b.adapter);
  EXPECT_GT(max_abs_diff(plain, adapted), 0.0);
  const Tensor flat = plain.reshaped({16, 16});
  const Tensor expect = txm::add(flat, txm::matmul(txm::matmul(flat, b.adapter->a), b.adapter->b));
  EXPECT_LT(max_abs_diff(adapted.reshaped({16, 16}), expect), 1e-12);
}

TEST(SwaBlock, ZeroShiftEqualsPlainBlock) {
  txm::Rng rng(8);
  const auto cfg = small_config(1, 0);
  const auto ew = txm::EncoderWeights::random(cfg, rng);
  const Tensor g = rng.normal({4, 4, 16}, 1.0);
  EXPECT_EQ(txm::swa_block(g, cfg, ew.blocks[0], nullptr), txm::transformer_block(g, cfg, ew.blocks[0], 0, nullptr));
}

TEST(SwaBlock, CornerPatchSeesAllFourWindowsAfterShiftedThenPlainBlock) {
  txm::Rng rng(9);
  const auto cfg = small_config(2, 1);
  const auto ew = txm::EncoderWeights::random(cfg, rng);
  const Tensor g = rng.normal({4, 4, 16}, 1.0);
  auto run = [&](const Tensor& x) {
    return txm::transformer_block(txm::swa_block(x, cfg, ew.blocks[0], nullptr), cfg, ew.blocks[1], 0, nullptr);
  };
  const Tensor base = run(g);
  // One probe patch from each pre-shift window; (1,1) is in the same window as (0,0).
  for (auto [pi, pj] : {std::pair<std::size_t, std::size_t>{1, 1}, {1, 2}, {2, 1}, {2, 2}}) {
    Tensor p = g;
    p(pi, pj, 0) += 1.0;
    EXPECT_TRUE(patch_changed(base, run(p), 0, 0)) << pi << "," << pj;
  }
}

TEST(Encode, DepthZeroIsIdentity) {
  txm::Rng rng(10);
  const auto cfg = small_config(0, 1);
  const Tensor g = rng.normal({4, 4, 16}, 1.0);
  EXPECT_EQ(txm::encode(g, cfg, txm::EncoderWeights{}), g);
}

TEST(Encode, MatchesArchiveReferenceForward) {
  txm::Rng rng(11);
  for (bool zero_b : {true, false}) {
    const auto cfg = small_config(2, 1);
    const auto ew = txm::EncoderWeights::random(cfg, rng, zero_b);
    txm::TensorArchive ar;
    ew.store(ar);
    const Tensor g = rng.normal({4, 4, 16}, 1.0);
    const Tensor got = txm::encode(g, cfg, txm::EncoderWeights::load(ar, cfg));
    EXPECT_LT(max_abs_diff(got, oracle::encoder_forward(g, cfg, ar)), 1e-9) << "zero_b=" << zero_b;
  }
}

TEST(Encode, MatchesReferenceOnLargerGrid) {
  txm::Rng rng(12);
  auto cfg = small_config(4, 2);
  cfg.window_patches = 4;
  const auto ew = txm::EncoderWeights::random(cfg, rng, false);
  txm::TensorArchive ar;
  ew.store(ar);
  const Tensor g = rng.normal({8, 8, 16}, 1.0);
  EXPECT_LT(max_abs_diff(txm::encode(g, cfg, ew), oracle::encoder_forward(g, cfg, ar)), 1e-9);
}

TEST(Encode, IntervalBeyondDepthMeansNoShift) {
  txm::Rng rng(13);
  const auto cfg = small_config(2, 1, 3);
  EXPECT_FALSE(cfg.is_swa_block(0));
  EXPECT_FALSE(cfg.is_swa_block(1));
  const auto ew = txm::EncoderWeights::random(cfg, rng);
  const Tensor g = rng.normal({4, 4, 16}, 1.0);
  EXPECT_EQ(txm::encode(g, cfg, ew), txm::encode(g, cfg, ew, {.shifted_windows = false, .adapters = false}));
}

TEST(Encode, SwaBlockIndexing) {
  const auto cfg = small_config(8, 1, 4);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(cfg.is_swa_block(i), i == 3 || i == 7) << i;
}

TEST(Encode, AdaptersOnlyOnShiftedBlocks) {
  txm::Rng rng(14);
  const auto ew = txm::EncoderWeights::random(small_config(4, 1), rng);
  EXPECT_FALSE(ew.blocks[0].adapter);
  EXPECT_TRUE(ew.blocks[1].adapter);
  EXPECT_FALSE(ew.blocks[2].adapter);
  EXPECT_TRUE(ew.blocks[3].adapter);
}

TEST(Encode, CrossWindowFlowIffShift) {
  txm::Rng rng(15);
  for (std::size_t shift : {0u, 1u}) {
    const auto cfg = small_config(2, shift);
    const auto ew = txm::EncoderWeights::random(cfg, rng);
    const Tensor g = rng.normal({4, 4, 16}, 1.0);
    Tensor p = g;
    p(1, 1, 3) += 0.5;
    const Tensor a = txm::encode(g, cfg, ew), b = txm::encode(p, cfg, ew);
    EXPECT_EQ(patch_changed(a, b, 1, 2), shift > 0) << "shift " << shift;
    EXPECT_EQ(patch_changed(a, b, 2, 2), shift > 0) << "shift " << shift;
    EXPECT_TRUE(patch_changed(a, b, 0, 0));
  }
}

TEST(Encode, MissingBlocksRaise) {
  txm::Rng rng(16);
  const auto ew = txm::EncoderWeights::random(small_config(1, 1), rng);
  EXPECT_THROW(txm::encode(Tensor::zeros({4, 4, 16}), small_config(2, 1), ew), txm::LoadError);
}

TEST(EncoderWeights, LoadRejectsMissingAdapter) {
  txm::Rng rng(17);
  const auto cfg = small_config(2, 1);
  auto ew = txm::EncoderWeights::random(cfg, rng);
  ew.blocks[1].adapter.reset();
  txm::TensorArchive ar;
  ew.store(ar);
  EXPECT_THROW(txm::EncoderWeights::load(ar, cfg), txm::LoadError);
}

TEST(EncoderConfig, ValidationNamesKey) {
  auto cfg = small_config(2, 2);
  try {
    cfg.validate();
    FAIL() << "expected ConfigError";
  } catch (const txm::ConfigError& e) {
    EXPECT_EQ(e.key(), "shift_size");
  }
  cfg = small_config(2, 1);
  cfg.n_heads = 3;
  EXPECT_THROW(cfg.validate(), txm::ConfigError);
}
