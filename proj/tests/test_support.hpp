// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "cce/matrix.hpp"
#include "cce/numeric.hpp"

namespace cce::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  return random_matrix(rows, cols, rng);
}

inline Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) e(r, c) = m(r, c);
  }
  return e;
}

inline Matrix from_eigen(const Eigen::MatrixXd& e) {
  Matrix m(e.rows(), e.cols());
  for (Eigen::Index r = 0; r < e.rows(); ++r) {
    for (Eigen::Index c = 0; c < e.cols(); ++c) m(r, c) = e(r, c);
  }
  return m;
}

/// Singular values from Eigen's two-sided Jacobi SVD, descending.
inline std::vector<double> oracle_singular_values(const Matrix& m) {
  Eigen::JacobiSVD<Eigen::MatrixXd> solver(to_eigen(m));
  const auto& s = solver.singularValues();
  return {s.data(), s.data() + s.size()};
}

/// Eigenvalues from Eigen's self-adjoint solver, descending.
inline std::vector<double> oracle_eigenvalues(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(to_eigen(m));
  const auto& e = solver.eigenvalues();
  std::vector<double> out(e.data(), e.data() + e.size());
  std::sort(out.rbegin(), out.rend());
  return out;
}

/// Random matrix of exact rank `rank` built from random factors.
inline Matrix random_low_rank(std::size_t rows, std::size_t cols, std::size_t rank, Rng& rng) {
  return matmul(random_matrix(rows, rank, rng), random_matrix(rank, cols, rng));
}

}  // namespace cce::testing
