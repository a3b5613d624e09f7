// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "textmonkey/config.hpp"

namespace txm = textmonkey;

namespace {

std::string error_key(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const txm::ConfigError& e) {
    return e.key();
  }
  return "<no error>";
}

}  // namespace

TEST(PipelineConfig, DefaultsValidate) {
  const txm::PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.window_count(), 4u);
  EXPECT_EQ(cfg.assembled_tokens(), 1280u);
  EXPECT_EQ(cfg.resolved_r(), 512u);
}

TEST(PipelineConfig, RDependsOnPixelCount) {
  txm::PipelineConfig cfg;
  cfg.resolution_h = cfg.resolution_w = 1344;
  EXPECT_EQ(cfg.window_count(), 9u);
  EXPECT_EQ(cfg.assembled_tokens(), 2560u);
  EXPECT_EQ(cfg.resolved_r(), 1024u);
  cfg.resolution_h = 448;
  cfg.resolution_w = 1344;
  EXPECT_EQ(cfg.resolved_r(), 512u);
}

TEST(PipelineConfig, RAtMostAssembledTokens) {
  txm::PipelineConfig cfg;
  cfg.resolution_h = cfg.resolution_w = 448;
  cfg.token_r = 512;
  EXPECT_NO_THROW(cfg.validate());
  cfg.token_r = 513;
  EXPECT_EQ(error_key([&] { cfg.validate(); }), "token_resampler.r");
  cfg.reduction = txm::TokenReduction::none;
  EXPECT_NO_THROW(cfg.validate());
}

TEST(PipelineConfig, ErrorsNameTheOffendingKey) {
  txm::PipelineConfig cfg;
  cfg.resolution_w = 500;
  EXPECT_EQ(error_key([&] { cfg.validate(); }), "resolution.w");
  cfg = {};
  cfg.encoder.d_model = 66;
  EXPECT_NE(error_key([&] { cfg.validate(); }), "<no error>");
  cfg = {};
  cfg.normalization.stddev[1] = 0.0;
  EXPECT_EQ(error_key([&] { cfg.validate(); }), "normalize.std");
}

TEST(ApplySetting, ParsesEveryKey) {
  txm::PipelineConfig cfg;
  txm::apply_config_text(cfg, R"(# toy
resolution.h = 1344
resolution.w = 448   # trailing comment
normalize.mean = 0.5, 0.5, 0.5
normalize.std = 0.25,0.25,0.25
d_model = 32
depth = 4
n_heads = 2
swa_interval = 4
shift_size = 8
window_patches = 16
d_adapter = 8
mlp_ratio = 2
token_resampler.r = 300
token_resampler.mode = filter-only
ablation.swa = false
ablation.zero_init = true
seed = 99
weights.path = w.tmar
)");
  EXPECT_EQ(cfg.resolution_h, 1344u);
  EXPECT_EQ(cfg.resolution_w, 448u);
  EXPECT_DOUBLE_EQ(cfg.normalization.stddev[2], 0.25);
  EXPECT_EQ(cfg.encoder.depth, 4u);
  EXPECT_EQ(cfg.encoder.window_patches, 16u);
  EXPECT_EQ(cfg.token_r, 300u);
  EXPECT_EQ(cfg.reduction, txm::TokenReduction::filter_only);
  EXPECT_FALSE(cfg.shifted_windows);
  EXPECT_EQ(cfg.seed, 99u);
  EXPECT_EQ(cfg.weights_path, "w.tmar");
  EXPECT_NO_THROW(cfg.validate());
}

TEST(ApplySetting, RejectsBadValues) {
  txm::PipelineConfig cfg;
  EXPECT_EQ(error_key([&] { txm::apply_override(cfg, "depth=-1"); }), "depth");
  EXPECT_EQ(error_key([&] { txm::apply_override(cfg, "depth=2x"); }), "depth");
  EXPECT_EQ(error_key([&] { txm::apply_override(cfg, "ablation.swa=maybe"); }), "ablation.swa");
  EXPECT_EQ(error_key([&] { txm::apply_override(cfg, "normalize.mean=1,2"); }), "normalize.mean");
  EXPECT_EQ(error_key([&] { txm::apply_override(cfg, "token_resampler.mode=fast"); }), "token_resampler.mode");
  EXPECT_EQ(error_key([&] { txm::apply_override(cfg, "colour=red"); }), "colour");
  EXPECT_THROW(txm::apply_override(cfg, "depth"), txm::ConfigError);
  EXPECT_THROW(txm::apply_config_text(cfg, "depth 2\n"), txm::ConfigError);
}

TEST(ApplySetting, OverrideBeatsFile) {
  const auto path = std::filesystem::temp_directory_path() / "tm_config_test.conf";
  std::ofstream(path) << "depth = 6\nseed = 1\n";
  txm::PipelineConfig cfg;
  txm::apply_config_file(cfg, path.string());
  txm::apply_override(cfg, "seed=5");
  EXPECT_EQ(cfg.encoder.depth, 6u);
  EXPECT_EQ(cfg.seed, 5u);
  std::filesystem::remove(path);
  EXPECT_THROW(txm::apply_config_file(cfg, path.string()), txm::IoError);
}

TEST(ConfigKeys, AllAccepted) {
  for (const auto& key : txm::config_keys()) {
    txm::PipelineConfig cfg;
    const std::string value = key.starts_with("normalize") ? "0.5,0.5,0.5"
                              : key == "token_resampler.mode" ? "none"
                              : key.starts_with("ablation")   ? "true"
                              : key == "weights.path"         ? "x"
                                                              : "4";
    EXPECT_NO_THROW(txm::apply_setting(cfg, key, value)) << key;
  }
}
