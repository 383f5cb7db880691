// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/encoded.hpp"

#include <string>
#include <vector>

#include "cce/error.hpp"

namespace cce {

void EncodedLayer::validate() const {
  if (left.cols() != right.rows()) {
    throw ShapeError("encoded layer factors " + left.shape_string() + " and " +
                     right.shape_string() + " do not chain");
  }
  if (rescale.size() != left.rows()) {
    throw ShapeError("encoded layer rescale has " + std::to_string(rescale.size()) +
                     " gains for " + std::to_string(left.rows()) + " rows");
  }
  for (std::size_t i = 0; i < residual.size(); ++i) {
    const auto& e = residual[i];
    if (e.row >= rows() || e.col >= cols()) {
      throw ShapeError("encoded layer residual entry outside " + std::to_string(rows()) + "x" +
                       std::to_string(cols()));
    }
    if (i > 0) {
      const auto& p = residual[i - 1];
      if (p.row > e.row || (p.row == e.row && p.col >= e.col)) {
        throw ShapeError("encoded layer residual entries must be unique and row-major ordered");
      }
    }
  }
}

Matrix decode_layer(const EncodedLayer& enc) {
  enc.validate();
  Matrix w = matmul(enc.left, enc.right);
  for (const auto& e : enc.residual) w(e.row, e.col) += e.value;
  for (std::size_t r = 0; r < w.rows(); ++r) {
    for (double& v : w.row(r)) v *= enc.rescale[r];
  }
  return w;
}

namespace {

// Eight independent accumulators so the compiler can vectorize the reduction.
double dot(const double* a, const double* b, std::size_t n) {
  double lane[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t l = 0; l < 8; ++l) lane[l] += a[i + l] * b[i + l];
  }
  double tail = 0.0;
  for (; i < n; ++i) tail += a[i] * b[i];
  return ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7])) +
         tail;
}

}  // namespace

Matrix apply_encoded(const EncodedLayer& enc, const Matrix& x) {
  if (x.cols() != enc.cols()) {
    throw ShapeError("apply_encoded: input " + x.shape_string() + " for layer " +
                     std::to_string(enc.rows()) + "x" + std::to_string(enc.cols()));
  }
  const std::size_t tokens = x.rows();
  const std::size_t rank = enc.rank();
  const std::size_t in = enc.cols();
  const std::size_t out = enc.rows();

  // Gains folded into the left factor, stored rank x out.
  std::vector<double> scaled_left(rank * out);
  for (std::size_t i = 0; i < out; ++i) {
    for (std::size_t j = 0; j < rank; ++j) scaled_left[j * out + i] = enc.rescale[i] * enc.left(i, j);
  }
  Matrix y(tokens, out);
  std::vector<double> latent(rank);
  for (std::size_t t = 0; t < tokens; ++t) {
    const double* xt = x.data() + t * in;
    double* yt = y.data() + t * out;
    for (std::size_t j = 0; j < rank; ++j) latent[j] = dot(xt, enc.right.data() + j * in, in);
    for (std::size_t j = 0; j < rank; ++j) {
      const double a = latent[j];
      const double* lj = scaled_left.data() + j * out;
      for (std::size_t i = 0; i < out; ++i) yt[i] += a * lj[i];
    }
  }
  if (enc.residual.empty()) return y;

  // Residual entries scatter; in token-minor layout each one is an axpy over
  // all tokens.
  const Matrix xcols = x.transpose();
  Matrix ycols(out, tokens);
  for (const auto& e : enc.residual) {
    const double a = enc.rescale[e.row] * e.value;
    double* yi = ycols.data() + e.row * tokens;
    const double* xk = xcols.data() + e.col * tokens;
    for (std::size_t t = 0; t < tokens; ++t) yi[t] += a * xk[t];
  }
  for (std::size_t t = 0; t < tokens; ++t) {
    for (std::size_t i = 0; i < out; ++i) y(t, i) += ycols(i, t);
  }
  return y;
}

}  // namespace cce
