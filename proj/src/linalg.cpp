// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cce/error.hpp"
#include "cce/numeric.hpp"

namespace cce {
namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void rotate(double* x, double* y, std::size_t n, double c, double s) {
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    const double yi = y[i];
    x[i] = c * xi - s * yi;
    y[i] = s * xi + c * yi;
  }
}

// Indices sorted by value descending; equal values keep index order.
std::vector<std::size_t> descending_order(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return order;
}

// Fills columns of `basis` (column-major, `dim` x `count`) flagged in
// `missing` with unit vectors orthogonal to every other column.
void complete_basis(std::vector<double>& basis, std::size_t dim, std::size_t count,
                    const std::vector<bool>& missing) {
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < count; ++j) {
    if (!missing[j]) continue;
    double* col = basis.data() + j * dim;
    while (true) {
      if (candidate >= dim) throw NumericalError("svd: cannot complete orthonormal basis");
      std::fill(col, col + dim, 0.0);
      col[candidate++] = 1.0;
      // Two passes of Gram-Schmidt against every populated column.
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t k = 0; k < count; ++k) {
          if (k == j || (missing[k] && k > j)) continue;
          const double* other = basis.data() + k * dim;
          const double proj = dot(col, other, dim);
          for (std::size_t i = 0; i < dim; ++i) col[i] -= proj * other[i];
        }
      }
      const double norm = std::sqrt(dot(col, col, dim));
      if (norm > 1e-6) {
        for (std::size_t i = 0; i < dim; ++i) col[i] /= norm;
        break;
      }
    }
  }
}

struct JacobiColumns {
  std::vector<double> columns;  // m x n column-major, mutually orthogonal on exit
  std::vector<double> v;        // n x n column-major, accumulated rotations
  std::size_t m = 0;
  std::size_t n = 0;
};

JacobiColumns one_sided_jacobi(const Matrix& a, bool transposed, bool want_v,
                               const std::string& label) {
  JacobiColumns work;
  work.m = transposed ? a.cols() : a.rows();
  work.n = transposed ? a.rows() : a.cols();
  const std::size_t m = work.m;
  const std::size_t n = work.n;
  work.columns.resize(m * n);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) {
      // column j of the working matrix B (B = a or aᵀ)
      const std::size_t i = transposed ? c : r;
      const std::size_t j = transposed ? r : c;
      work.columns[j * m + i] = a(r, c);
    }
  }
  if (want_v) {
    work.v.assign(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) work.v[j * n + j] = 1.0;
  }

  const double tol = kEps * static_cast<double>(std::max<std::size_t>(m, 8));
  const std::size_t max_sweeps = 100 * std::min(m, n);
  std::vector<double> norms(n);
  for (std::size_t j = 0; j < n; ++j) {
    norms[j] = dot(&work.columns[j * m], &work.columns[j * m], m);
  }
  bool converged = false;
  for (std::size_t sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double* bp = &work.columns[p * m];
        double* bq = &work.columns[q * m];
        const double alpha = norms[p];
        const double beta = norms[q];
        if (alpha == 0.0 || beta == 0.0) continue;
        const double gamma = dot(bp, bq, m);
        if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(bp, bq, m, c, s);
        if (want_v) rotate(&work.v[p * n], &work.v[q * n], n, c, s);
        norms[p] = dot(bp, bp, m);
        norms[q] = dot(bq, bq, m);
      }
    }
    converged = !rotated;
  }
  if (!converged) {
    throw DecompositionError("svd did not converge within " + std::to_string(max_sweeps) +
                             " sweeps for " + label + " (" + a.shape_string() + ")");
  }
  return work;
}

void require_decomposable(const Matrix& a, const std::string& label) {
  if (a.rows() == 0 || a.cols() == 0) throw ShapeError("svd of empty " + label);
  a.require_finite(label);
}

}  // namespace

Matrix SvdResult::reconstruct() const {
  Matrix scaled = u;
  for (std::size_t i = 0; i < scaled.rows(); ++i) {
    for (std::size_t k = 0; k < singular_values.size(); ++k) scaled(i, k) *= singular_values[k];
  }
  return matmul_transpose_b(scaled, v);
}

SvdResult svd(const Matrix& a, const std::string& label) {
  require_decomposable(a, label);
  const bool transposed = a.rows() < a.cols();
  JacobiColumns work = one_sided_jacobi(a, transposed, /*want_v=*/true, label);
  const std::size_t m = work.m;
  const std::size_t n = work.n;

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    sigma[j] = std::sqrt(dot(&work.columns[j * m], &work.columns[j * m], m));
  }
  const std::vector<std::size_t> order = descending_order(sigma);
  const double sigma_max = sigma[order.front()];

  // Left vectors for the working matrix, column-major in sorted order.
  std::vector<double> left(m * n);
  std::vector<bool> missing(n, false);
  std::vector<double> sorted_sigma(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    sorted_sigma[k] = sigma[j];
    if (sigma[j] <= sigma_max * 1e-13 || sigma[j] == 0.0) {
      missing[k] = true;
      continue;
    }
    for (std::size_t i = 0; i < m; ++i) left[k * m + i] = work.columns[j * m + i] / sigma[j];
  }
  if (std::find(missing.begin(), missing.end(), true) != missing.end()) {
    complete_basis(left, m, n, missing);
  }

  Matrix left_m(m, n);
  Matrix right_m(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    for (std::size_t i = 0; i < m; ++i) left_m(i, k) = left[k * m + i];
    for (std::size_t i = 0; i < n; ++i) right_m(i, k) = work.v[j * n + i];
  }

  SvdResult out;
  out.singular_values = std::move(sorted_sigma);
  if (transposed) {
    out.u = std::move(right_m);
    out.v = std::move(left_m);
  } else {
    out.u = std::move(left_m);
    out.v = std::move(right_m);
  }
  return out;
}

std::vector<double> singular_values(const Matrix& a, const std::string& label) {
  require_decomposable(a, label);
  const bool transposed = a.rows() < a.cols();
  JacobiColumns work = one_sided_jacobi(a, transposed, /*want_v=*/false, label);
  std::vector<double> sigma(work.n);
  for (std::size_t j = 0; j < work.n; ++j) {
    sigma[j] = std::sqrt(dot(&work.columns[j * work.m], &work.columns[j * work.m], work.m));
  }
  std::vector<double> sorted(work.n);
  const auto order = descending_order(sigma);
  for (std::size_t k = 0; k < work.n; ++k) sorted[k] = sigma[order[k]];
  return sorted;
}

EigResult sym_eig(const Matrix& input) {
  if (input.rows() != input.cols() || input.rows() == 0) {
    throw ShapeError("sym_eig requires a non-empty square matrix, got " + input.shape_string());
  }
  input.require_finite("sym_eig input");
  const std::size_t n = input.rows();
  double scale = 1.0;
  for (double v : input.values()) scale = std::max(scale, std::abs(v));
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(input(i, j) - input(j, i)) > 1e-10 * scale) {
        throw ValidationError("sym_eig input is not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
      a(i, j) = 0.5 * (input(i, j) + input(j, i));
    }
  }

  Matrix vectors = Matrix::identity(n);
  const std::size_t max_sweeps = 100 * n;
  double total = 0.0;
  for (double v : a.values()) total += v * v;
  const double off_target = (kEps * static_cast<double>(n)) * (kEps * static_cast<double>(n)) * total;
  bool converged = false;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    }
    if (off <= off_target) {
      converged = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(1.0, theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors(k, p);
          const double vkq = vectors(k, q);
          vectors(k, p) = c * vkp - s * vkq;
          vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (!converged) {
    throw DecompositionError("sym_eig did not converge within " + std::to_string(max_sweeps) +
                             " sweeps (" + input.shape_string() + ")");
  }

  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = a(i, i);
  const auto order = descending_order(diag);
  EigResult out;
  out.eigenvalues.resize(n);
  out.eigenvectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.eigenvalues[k] = diag[order[k]];
    for (std::size_t i = 0; i < n; ++i) out.eigenvectors(i, k) = vectors(i, order[k]);
  }
  return out;
}

double frobenius_norm(const Matrix& a) {
  CompensatedSum acc;
  for (double v : a.values()) acc.add(v * v);
  return std::sqrt(acc.value());
}

double nuclear_norm(const Matrix& a) {
  const auto sigma = singular_values(a, "nuclear_norm input");
  return compensated_sum(sigma);
}

double spectral_norm(const Matrix& a) { return singular_values(a, "spectral_norm input").front(); }

std::size_t l0_norm(const Matrix& a, double zero_tol) {
  if (!(zero_tol >= 0.0)) throw ValidationError("l0_norm: zero_tol must be >= 0");
  std::size_t count = 0;
  for (double v : a.values()) {
    if (std::abs(v) > zero_tol) ++count;
  }
  return count;
}

}  // namespace cce
