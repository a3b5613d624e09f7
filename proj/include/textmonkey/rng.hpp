// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

#include "textmonkey/numerics.hpp"

namespace textmonkey {

/// Seeded source for weight initialization and synthetic data.
///
/// Generated tensors are rounded to float32 so that a randomly initialized
/// model and the same model reloaded from an archive are identical.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  Tensor normal(Shape shape, double stddev, double mean = 0.0) {
    std::normal_distribution<double> dist(mean, stddev);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(dist(engine_)));
    return t;
  }

  Tensor uniform(Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(dist(engine_)));
    return t;
  }

  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace textmonkey
