// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cce/matrix.hpp"

namespace cce {

struct SparseEntry {
  std::uint32_t row;
  std::uint32_t col;
  double value;

  bool operator==(const SparseEntry&) const = default;
};

/// Compressed layer: reconstruction = diag(rescale) · (left · right + residual).
struct EncodedLayer {
  Matrix left;                        // m x r
  Matrix right;                       // r x n
  std::vector<SparseEntry> residual;  // row-major order, unique positions
  std::vector<double> rescale;        // one gain per output row

  std::size_t rows() const { return left.rows(); }
  std::size_t cols() const { return right.cols(); }
  std::size_t rank() const { return left.cols(); }

  /// Stored parameter count: factor entries + residual entries + gains.
  std::size_t stored_parameters() const {
    return left.size() + right.size() + residual.size() + rescale.size();
  }

  /// Throws ShapeError on inconsistent factor, residual or gain shapes.
  void validate() const;

  bool operator==(const EncodedLayer&) const = default;
};

Matrix decode_layer(const EncodedLayer& enc);

/// y = x · Wᵀ evaluated through the factors, for x of shape T x cols().
Matrix apply_encoded(const EncodedLayer& enc, const Matrix& x);

}  // namespace cce
