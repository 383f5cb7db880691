// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/matrix.hpp"

#include <cmath>

#include "cce/error.hpp"

namespace cce {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (entries_.size() != rows_ * cols_) {
    throw ShapeError("matrix entries length " + std::to_string(entries_.size()) +
                     " does not match shape " + shape_string());
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> entries;
  entries.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged initializer for Matrix");
    entries.insert(entries.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(entries));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  }
  return t;
}

void Matrix::require_finite(const std::string& label) const {
  if (!all_finite(*this)) throw NumericalError("non-finite entry in " + label);
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* context) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(context) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

// The kernels below keep the innermost loop an axpy over a contiguous row so
// the compiler can vectorize without reassociating sums.
namespace {

// out[0..n) += sum_q s[q] * in[q][0..n), four source rows at a time.
void accumulate_rows(double* out, const double* const* in, const double* s, std::size_t count,
                     std::size_t n) {
  std::size_t q = 0;
  for (; q + 4 <= count; q += 4) {
    const double s0 = s[q], s1 = s[q + 1], s2 = s[q + 2], s3 = s[q + 3];
    const double *r0 = in[q], *r1 = in[q + 1], *r2 = in[q + 2], *r3 = in[q + 3];
    for (std::size_t j = 0; j < n; ++j) out[j] += s0 * r0[j] + s1 * r1[j] + s2 * r2[j] + s3 * r3[j];
  }
  for (; q < count; ++q) {
    const double sq = s[q];
    const double* r = in[q];
    for (std::size_t j = 0; j < n; ++j) out[j] += sq * r[j];
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
  }
  Matrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  std::vector<const double*> in;
  std::vector<double> scale;
  in.reserve(a.cols());
  scale.reserve(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    in.clear();
    scale.clear();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double s = a(i, k);
      if (s == 0.0) continue;
      in.push_back(b.data() + k * n);
      scale.push_back(s);
    }
    accumulate_rows(c.data() + i * n, in.data(), scale.data(), in.size(), n);
  }
  return c;
}
Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transpose_b: " + a.shape_string() + " * (" + b.shape_string() +
                     ")^T");
  }
  return matmul(a, b.transpose());
}

Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_transpose_a: (" + a.shape_string() + ")^T * " +
                     b.shape_string());
  }
  Matrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  std::vector<const double*> in;
  std::vector<double> scale;
  in.reserve(a.rows());
  scale.reserve(a.rows());
  for (std::size_t i = 0; i < a.cols(); ++i) {
    in.clear();
    scale.clear();
    for (std::size_t k = 0; k < a.rows(); ++k) {
      const double s = a(k, i);
      if (s == 0.0) continue;
      in.push_back(b.data() + k * n);
      scale.push_back(s);
    }
    accumulate_rows(c.data() + i * n, in.data(), scale.data(), in.size(), n);
  }
  return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "matrix add");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "matrix subtract");
  Matrix c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (double& v : c.values()) v *= s;
  return c;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

bool all_finite(const Matrix& a) {
  for (double v : a.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace cce
