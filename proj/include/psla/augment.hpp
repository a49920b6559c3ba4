// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "psla/corpus.hpp"
#include "psla/error.hpp"
#include "psla/matrix.hpp"

namespace psla {

/// Frequency band [f0, f0+f) and time band [t0, t0+t). Each band is masked
/// across the full extent of the other axis.
struct MaskParams {
  std::size_t f0 = 0;
  std::size_t f = 0;
  std::size_t t0 = 0;
  std::size_t t = 0;

  bool operator==(const MaskParams&) const = default;
};

inline bool within_bounds(const MaskParams& p, FeatureShape shape) {
  return p.f <= shape.bins && p.f0 <= shape.bins - p.f && p.t <= shape.frames && p.t0 <= shape.frames - p.t;
}

template <class T>
void apply_mask_inplace(Matrix<T>& x, const MaskParams& p, T mask_value = T{0}) {
  if (!within_bounds(p, FeatureShape{x.rows(), x.cols()}))
    throw Error(ErrorKind::invalid_argument, "mask exceeds the feature map");
  for (std::size_t t = 0; t < x.rows(); ++t) {
    auto row = x.row(t);
    if (t >= p.t0 && t < p.t0 + p.t) {
      std::fill(row.begin(), row.end(), mask_value);
    } else {
      std::fill(row.begin() + static_cast<std::ptrdiff_t>(p.f0),
                row.begin() + static_cast<std::ptrdiff_t>(p.f0 + p.f), mask_value);
    }
  }
}

template <class T>
Matrix<T> apply_mask(Matrix<T> x, const MaskParams& p, T mask_value = T{0}) {
  apply_mask_inplace(x, p, mask_value);
  return x;
}

/// Convex-combination weights for (first, second) operands.
///
/// The larger weight is taken verbatim and the smaller one is derived from
/// it, which is exact in binary floating point; this makes
/// mix(a, b, l) == mix(b, a, 1 - l) hold bit for bit.
inline std::pair<double, double> mix_weights(double lambda) {
  detail::require(lambda >= 0.0 && lambda <= 1.0, "mixup lambda must lie in [0, 1]");
  if (lambda >= 0.5) return {lambda, 1.0 - lambda};
  const double second = 1.0 - lambda;
  return {1.0 - second, second};
}

template <class T>
std::vector<T> mix(std::span<const T> a, std::span<const T> b, double lambda) {
  if (a.size() != b.size()) throw Error(ErrorKind::shape_mismatch, "mixup operands differ in size");
  const auto [wa, wb] = mix_weights(lambda);
  std::vector<T> out(a.size());
  for (std::size_t n = 0; n < a.size(); ++n)
    out[n] = static_cast<T>(wa * static_cast<double>(a[n]) + wb * static_cast<double>(b[n]));
  return out;
}

inline std::vector<double> soft_labels(const LabelSet& y) { return {y.begin(), y.end()}; }

template <class T>
struct Mixed {
  Matrix<T> x;
  std::vector<double> y;
};

/// Feature-level mixup: x = l*x_i + (1-l)*x_j, y = l*y_i + (1-l)*y_j.
template <class T>
Mixed<T> mixup(const Matrix<T>& xi, std::span<const double> yi, const Matrix<T>& xj, std::span<const double> yj,
               double lambda) {
  if (!xi.same_shape(xj)) throw Error(ErrorKind::shape_mismatch, "mixup feature maps differ in shape");
  auto x = mix<T>(xi.values(), xj.values(), lambda);
  return {Matrix<T>(xi.rows(), xi.cols(), std::move(x)), mix<double>(yi, yj, lambda)};
}

}  // namespace psla
