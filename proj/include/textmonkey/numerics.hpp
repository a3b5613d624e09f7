// Copyright 2026 The TextMonkey-Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "textmonkey/error.hpp"

namespace textmonkey {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major array of doubles.
///
/// Every extent is positive and `data().size() == product(shape())`. The
/// last axis is the "feature" axis: `rows()`/`cols()` view any tensor as a
/// matrix of `size()/last` rows of `last` values, which is how the row-wise
/// ops (softmax, layer_norm, attention) see their inputs.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_volume(shape_), fill);
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_volume(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t n = rows.size();
    const std::size_t m = n ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(n * m);
    for (const auto& r : rows) {
      if (r.size() != m) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Tensor({n, m}, std::move(data));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t cols() const noexcept { return shape_.empty() ? 0 : shape_.back(); }
  std::size_t rows() const noexcept { return cols() ? data_.size() / cols() : 0; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  std::span<double> row(std::size_t i) { return std::span<double>(data_).subspan(i * cols(), cols()); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * cols(), cols());
  }

  Tensor reshaped(Shape shape) const {
    if (shape_volume(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  /// Value equality: same shape and `==` on every element.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Additive mask value for disallowed attention positions.
inline constexpr double kMaskSentinel = -1e9;

inline bool is_masked(double mask_value) { return mask_value <= kMaskSentinel / 2; }

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  Tensor out({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out(j, i) = a(i, j);
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

inline Tensor scale(const Tensor& a, double s) {
  Tensor out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

/// Adds a length-`cols()` bias to every row.
inline Tensor add_bias(const Tensor& a, const Tensor& bias) {
  if (bias.size() != a.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit rows of " +
                         shape_string(a.shape()));
  }
  Tensor out = a;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
  return out;
}

/// Rows `indices` of a matrix, in the given order.
inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  detail::require_rank(a, 2, "gather_rows");
  Tensor out({indices.size(), a.cols()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.rows()) throw DimensionError("gather_rows: index out of range");
    std::copy_n(a.row(indices[i]).begin(), a.cols(), out.row(i).begin());
  }
  return out;
}

/// Stacks matrices with equal column counts vertically.
inline Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: nothing to concatenate");
  const std::size_t d = parts.front().cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat_rows");
    if (p.cols() != d) {
      throw DimensionError("concat_rows: width mismatch " + shape_string(parts.front().shape()) + " vs " +
                           shape_string(p.shape()));
    }
    n += p.rows();
  }
  std::vector<double> data;
  data.reserve(n * d);
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return Tensor({n, d}, std::move(data));
}

/// Columns [begin, begin + count) of a matrix.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  detail::require_rank(a, 2, "slice_cols");
  if (begin + count > a.cols()) throw DimensionError("slice_cols: range exceeds " + shape_string(a.shape()));
  Tensor out({a.rows(), count});
  for (std::size_t r = 0; r < a.rows(); ++r)
    std::copy_n(a.row(r).begin() + static_cast<std::ptrdiff_t>(begin), count, out.row(r).begin());
  return out;
}

inline void assign_cols(Tensor& dst, std::size_t begin, const Tensor& src) {
  if (src.rows() != dst.rows() || begin + src.cols() > dst.cols()) {
    throw DimensionError("assign_cols: " + shape_string(src.shape()) + " does not fit into " +
                         shape_string(dst.shape()));
  }
  for (std::size_t r = 0; r < dst.rows(); ++r)
    std::copy_n(src.row(r).begin(), src.cols(), dst.row(r).begin() + static_cast<std::ptrdiff_t>(begin));
}

/// Extracts window (wr, wc) of side `side` from an [Hp×Wp×D] grid as [side²×D].
inline Tensor extract_grid_window(const Tensor& grid, std::size_t wr, std::size_t wc, std::size_t side) {
  const std::size_t d = grid.dim(2);
  Tensor out({side * side, d});
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j)
      std::copy_n(grid.data().begin() + static_cast<std::ptrdiff_t>(((wr * side + i) * grid.dim(1) + wc * side + j) * d), d,
                  out.row(i * side + j).begin());
  return out;
}

/// Row-wise softmax over the last axis with optional additive mask.
///
/// Mask entries are 0 (allowed) or `kMaskSentinel` (blocked). A row whose
/// every position is blocked raises NumericError.
inline Tensor softmax(const Tensor& x, const Tensor* mask = nullptr) {
  if (x.empty()) throw DimensionError("softmax: empty input");
  if (mask) detail::require_same_shape(x, *mask, "softmax mask");
  Tensor out = x;
  const std::size_t n = x.cols();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = out.row(r);
    if (mask) {
      auto m = mask->row(r);
      if (std::all_of(m.begin(), m.end(), is_masked)) throw NumericError("fully masked attention row");
      for (std::size_t j = 0; j < n; ++j) row[j] += m[j];
    }
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

inline Tensor softmax(const Tensor& x, const std::optional<Tensor>& mask) {
  return softmax(x, mask ? &*mask : nullptr);
}

inline constexpr double kLayerNormEps = 1e-5;

inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kLayerNormEps) {
  const std::size_t d = x.cols();
  if (d == 0) throw DimensionError("layer_norm: empty input");
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: affine parameters " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " do not match " + shape_string(x.shape()));
  }
  if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = out.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) row[j] = (row[j] - mean) * inv * gamma[j] + beta[j];
  }
  return out;
}

inline double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

inline Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = gelu(v);
  return out;
}

inline double dot(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw DimensionError("dot: length mismatch " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
  return s;
}

inline double norm(std::span<const double> u) { return std::sqrt(dot(u, u)); }

/// Cosine of the angle between two nonzero vectors, clamped to [-1, 1].
inline double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  const double nu = norm(u), nv = norm(v);
  if (nu == 0.0 || nv == 0.0) throw NumericError("zero-norm token");
  return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

inline double cosine_similarity(const Tensor& u, const Tensor& v) {
  if (u.size() != v.size()) {
    throw DimensionError("cosine_similarity: shape mismatch " + shape_string(u.shape()) + " vs " +
                         shape_string(v.shape()));
  }
  return cosine_similarity(u.data(), v.data());
}

namespace detail {

inline void check_attention_shapes(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask) {
  require_rank(q, 2, "attention query");
  require_rank(k, 2, "attention key");
  require_rank(v, 2, "attention value");
  if (q.dim(1) != k.dim(1)) {
    throw DimensionError("attention: query " + shape_string(q.shape()) + " and key " + shape_string(k.shape()) +
                         " widths differ");
  }
  if (k.dim(0) != v.dim(0)) {
    throw DimensionError("attention: key " + shape_string(k.shape()) + " and value " + shape_string(v.shape()) +
                         " lengths differ");
  }
  if (mask && mask->shape() != Shape{q.dim(0), k.dim(0)}) {
    throw DimensionError("attention: mask " + shape_string(mask->shape()) + " does not match scores [" +
                         std::to_string(q.dim(0)) + "x" + std::to_string(k.dim(0)) + "]");
  }
}

inline Tensor attention_scores(const Tensor& q, const Tensor& k) {
  return scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.dim(1))));
}

}  // namespace detail

/// softmax(q kᵀ / √D + mask) v.
inline Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* mask = nullptr) {
  detail::check_attention_shapes(q, k, v, mask);
  return matmul(softmax(detail::attention_scores(q, k), mask), v);
}

/// Jacobian-vector product of row-wise softmax: for p = softmax(x),
/// (J d)_i = p_i (d_i − Σ_j p_j d_j) on each row.
inline Tensor softmax_jvp(const Tensor& x, const Tensor& direction, const Tensor* mask = nullptr) {
  detail::require_same_shape(x, direction, "softmax_jvp");
  const Tensor p = softmax(x, mask);
  Tensor out = direction;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    const double mean = dot(p.row(r), direction.row(r));
    auto o = out.row(r);
    auto pr = p.row(r);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] = pr[j] * (o[j] - mean);
  }
  return out;
}

/// Directional derivative of scaled_dot_attention along (dq, dk, dv).
inline Tensor attention_jvp(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& dq, const Tensor& dk,
                            const Tensor& dv, const Tensor* mask = nullptr) {
  detail::check_attention_shapes(q, k, v, mask);
  detail::require_same_shape(q, dq, "attention_jvp dq");
  detail::require_same_shape(k, dk, "attention_jvp dk");
  detail::require_same_shape(v, dv, "attention_jvp dv");
  Tensor scores = detail::attention_scores(q, k);
  if (mask) scores = add(scores, *mask);
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.dim(1)));
  const Tensor dscores = scale(add(matmul(dq, transpose(k)), matmul(q, transpose(dk))), inv);
  const Tensor p = softmax(scores);
  const Tensor dp = softmax_jvp(scores, dscores);
  return add(matmul(dp, v), matmul(p, dv));
}

struct DerivativeProbe {
  double analytic = 0.0;
  double numeric = 0.0;

  double abs_error() const { return std::abs(analytic - numeric); }
  /// |analytic − numeric| / max(|analytic|, |numeric|, 1e-12).
  double relative_error() const {
    return abs_error() / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  }
};

using ScalarFunction = std::function<double(const Tensor&)>;
/// Closed-form directional derivative at x along direction.
using DirectionalDerivative = std::function<double(const Tensor& x, const Tensor& direction)>;

/// Compares a closed-form directional derivative with the central difference
/// (f(x + h·d) − f(x − h·d)) / 2h.
inline DerivativeProbe directional_derivative_check(const ScalarFunction& f, const DirectionalDerivative& analytic,
                                                    const Tensor& x, const Tensor& direction, double h) {
  detail::require_same_shape(x, direction, "directional_derivative_check");
  if (!(h >= 1e-7 && h <= 1e-3)) throw ParameterError("directional_derivative_check: h must lie in [1e-7, 1e-3]");
  const double fp = f(add(x, scale(direction, h)));
  const double fm = f(sub(x, scale(direction, h)));
  if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("non-finite function evaluation");
  DerivativeProbe probe;
  probe.numeric = (fp - fm) / (2.0 * h);
  probe.analytic = analytic(x, direction);
  if (!std::isfinite(probe.analytic)) throw NumericError("non-finite analytic derivative");
  return probe;
}

}  // namespace textmonkey
