// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cce/matrix.hpp"

namespace cce {

/// Thin SVD, a = u · diag(singular_values) · vᵀ with r = min(rows, cols).
struct SvdResult {
  Matrix u;                             // rows x r, orthonormal columns
  std::vector<double> singular_values;  // non-increasing, >= 0
  Matrix v;                             // cols x r, orthonormal columns

  Matrix reconstruct() const;
};

struct EigResult {
  std::vector<double> eigenvalues;  // non-increasing
  Matrix eigenvectors;              // column k pairs with eigenvalues[k]
};

/// One-sided (Hestenes) Jacobi SVD. Sweeps are capped at 100 * min(m, n);
/// hitting the cap throws DecompositionError mentioning `label`. Equal
/// singular values keep the order of their original columns.
SvdResult svd(const Matrix& a, const std::string& label = "matrix");

/// Singular values only; same algorithm and ordering as svd().
std::vector<double> singular_values(const Matrix& a, const std::string& label = "matrix");

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. The input is
/// symmetrized as (A + Aᵀ)/2; asymmetry above 1e-10 (relative to the largest
/// entry, floor 1) is rejected, as is a non-square input.
EigResult sym_eig(const Matrix& a);

double frobenius_norm(const Matrix& a);
double nuclear_norm(const Matrix& a);
double spectral_norm(const Matrix& a);
/// Number of entries with |x| > zero_tol.
std::size_t l0_norm(const Matrix& a, double zero_tol = 0.0);

}  // namespace cce
