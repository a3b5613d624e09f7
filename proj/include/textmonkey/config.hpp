// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Pipeline configuration.
//
// Config files are flat `key = value` lines; `#` starts a comment. Values set
// later (command-line overrides) win over earlier ones (file), which win over
// the defaults below.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "textmonkey/encoder.hpp"
#include "textmonkey/error.hpp"
#include "textmonkey/resampler.hpp"
#include "textmonkey/split.hpp"

namespace textmonkey {

struct PipelineConfig {
  std::size_t resolution_h = 896;
  std::size_t resolution_w = 896;
  Normalization normalization;
  EncoderConfig encoder{.depth = 2,
                        .d_model = 64,
                        .n_heads = 4,
                        .swa_interval = 2,
                        .window_patches = 32,
                        .shift_size = 16,
                        .d_adapter = 16,
                        .mlp_ratio = 4};
  std::optional<std::size_t> token_r;
  TokenReduction reduction = TokenReduction::resample;
  bool shifted_windows = true;
  bool zero_init = true;
  std::uint64_t seed = 0;
  std::string weights_path;

  std::size_t window_count() const { return (resolution_h / kWindowSize) * (resolution_w / kWindowSize); }

  /// Tokens entering the token resampler: 256 per window plus 256 for the global view.
  std::size_t assembled_tokens() const { return (window_count() + 1) * kResamplerQueries; }

  /// Configured r, or 512 up to 896×896 pixels and 1024 above.
  std::size_t resolved_r() const {
    if (token_r) return *token_r;
    return resolution_h * resolution_w <= 896 * 896 ? 512 : 1024;
  }

  void validate() const {
    if (resolution_h == 0 || resolution_h % kWindowSize) throw ConfigError("must be a positive multiple of 448", "resolution.h");
    if (resolution_w == 0 || resolution_w % kWindowSize) throw ConfigError("must be a positive multiple of 448", "resolution.w");
    encoder.validate();
    if (kPatchesPerSide % encoder.window_patches) {
      throw ConfigError("must divide the 32-patch window side", "window_patches");
    }
    if (encoder.d_model % 4) throw ConfigError("must be divisible by 4 for 2D positional encodings", "d_model");
    for (double s : normalization.stddev)
      if (!(s > 0.0)) throw ConfigError("entries must be positive", "normalize.std");
    const std::size_t r = resolved_r();
    if (reduction != TokenReduction::none && (r == 0 || r > assembled_tokens())) {
      throw ConfigError("r = " + std::to_string(r) + " exceeds the " + std::to_string(assembled_tokens()) +
                            " assembled tokens",
                        "token_resampler.r");
    }
  }
};

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "resolution.h", "resolution.w",   "normalize.mean",       "normalize.std",        "d_model",
      "depth",        "n_heads",        "swa_interval",         "shift_size",           "window_patches",
      "d_adapter",    "mlp_ratio",      "token_resampler.r",    "token_resampler.mode", "ablation.swa",
      "ablation.zero_init", "seed",     "weights.path"};
  return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value.front() == '-') throw std::invalid_argument("negative");
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("expected a non-negative integer, got '" + value + "'", key);
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw ConfigError("expected a boolean, got '" + value + "'", key);
}

inline std::array<double, 3> parse_triple(const std::string& key, const std::string& value) {
  std::array<double, 3> out{};
  std::stringstream ss(value);
  std::string item;
  std::size_t n = 0;
  while (std::getline(ss, item, ',')) {
    if (n == 3) throw ConfigError("expected three comma-separated numbers", key);
    try {
      std::size_t used = 0;
      const std::string t = trim(item);
      out[n++] = std::stod(t, &used);
      if (used != t.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("expected three comma-separated numbers", key);
    }
  }
  if (n != 3) throw ConfigError("expected three comma-separated numbers", key);
  return out;
}

}  // namespace detail

inline TokenReduction parse_token_reduction(const std::string& value) {
  if (value == "resample") return TokenReduction::resample;
  if (value == "unsorted") return TokenReduction::unsorted;
  if (value == "random-queries") return TokenReduction::random_queries;
  if (value == "filter-only") return TokenReduction::filter_only;
  if (value == "none") return TokenReduction::none;
  throw ConfigError("expected resample|unsorted|random-queries|filter-only|none, got '" + value + "'",
                    "token_resampler.mode");
}

inline void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& raw) {
  using detail::parse_unsigned;
  const std::string value = detail::trim(raw);
  if (key == "resolution.h") cfg.resolution_h = parse_unsigned(key, value);
  else if (key == "resolution.w") cfg.resolution_w = parse_unsigned(key, value);
  else if (key == "normalize.mean") cfg.normalization.mean = detail::parse_triple(key, value);
  else if (key == "normalize.std") cfg.normalization.stddev = detail::parse_triple(key, value);
  else if (key == "d_model") cfg.encoder.d_model = parse_unsigned(key, value);
  else if (key == "depth") cfg.encoder.depth = parse_unsigned(key, value);
  else if (key == "n_heads") cfg.encoder.n_heads = parse_unsigned(key, value);
  else if (key == "swa_interval") cfg.encoder.swa_interval = parse_unsigned(key, value);
  else if (key == "shift_size") cfg.encoder.shift_size = parse_unsigned(key, value);
  else if (key == "window_patches") cfg.encoder.window_patches = parse_unsigned(key, value);
  else if (key == "d_adapter") cfg.encoder.d_adapter = parse_unsigned(key, value);
  else if (key == "mlp_ratio") cfg.encoder.mlp_ratio = parse_unsigned(key, value);
  else if (key == "token_resampler.r") cfg.token_r = parse_unsigned(key, value);
  else if (key == "token_resampler.mode") cfg.reduction = parse_token_reduction(value);
  else if (key == "ablation.swa") cfg.shifted_windows = detail::parse_bool(key, value);
  else if (key == "ablation.zero_init") cfg.zero_init = detail::parse_bool(key, value);
  else if (key == "seed") cfg.seed = parse_unsigned(key, value);
  else if (key == "weights.path") cfg.weights_path = value;
  else throw ConfigError("unknown configuration key", key);
}

/// Applies every `key = value` line of a config file's text.
inline void apply_config_text(PipelineConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + " is not 'key = value'");
    apply_setting(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

inline void apply_config_file(PipelineConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  apply_config_text(cfg, ss.str());
}

/// Parses a `key=value` command-line override.
inline void apply_override(PipelineConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  apply_setting(cfg, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

}  // namespace textmonkey
