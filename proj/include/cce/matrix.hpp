// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cce {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return entries_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return entries_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {entries_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {entries_.data() + r * cols_, cols_}; }

  std::span<double> values() { return entries_; }
  std::span<const double> values() const { return entries_; }
  double* data() { return entries_.data(); }
  const double* data() const { return entries_.data(); }

  Matrix transpose() const;

  /// Throws NumericalError naming `label` if any entry is NaN or infinite.
  void require_finite(const std::string& label) const;

  std::string shape_string() const;

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a · bᵀ
Matrix matmul_transpose_b(const Matrix& a, const Matrix& b);
/// aᵀ · b
Matrix matmul_transpose_a(const Matrix& a, const Matrix& b);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

/// Largest absolute entrywise difference; shapes must agree.
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& a);

void require_same_shape(const Matrix& a, const Matrix& b, const char* context);

}  // namespace cce
