// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cce/linalg.hpp"
#include "cce/matrix.hpp"

namespace cce {

/// Bank of fixed linear maps from a flattened layer (length input_dim) into
/// a shared latent space of dimension latent_dim. Immutable once built.
class TransformBank {
 public:
  /// Wraps explicit projections. Every transform must be latent_dim x
  /// input_dim with unit-norm rows.
  explicit TransformBank(std::vector<Matrix> transforms, std::uint64_t seed = 0);

  /// Gaussian projections with normalized rows, drawn from `seed`.
  static TransformBank random(std::uint64_t seed, std::size_t count, std::size_t latent_dim,
                              std::size_t input_dim);

  std::size_t count() const { return transforms_.size(); }
  std::size_t latent_dim() const { return transforms_.front().rows(); }
  std::size_t input_dim() const { return transforms_.front().cols(); }
  std::uint64_t seed() const { return seed_; }
  const std::vector<Matrix>& transforms() const { return transforms_; }

  /// f_k applied to the row-major flattening of `w`.
  std::vector<double> apply(std::size_t k, const Matrix& w) const;

  /// Mean of f_k(w) over all transforms; the layer representation used for
  /// covariance analysis.
  std::vector<double> represent(const Matrix& w) const;

 private:
  std::vector<Matrix> transforms_;
  std::uint64_t seed_;
};

/// S(wi, wj) = (1/m) Σ_k ||f_k(wi) - f_k(wj)||². The per-transform terms are
/// summed in sorted order, so the result does not depend on bank order.
double contextual_similarity(const Matrix& wi, const Matrix& wj, const TransformBank& bank);

/// Pairwise similarity over `layers` (all the bank's input shape). Rows are
/// computed in parallel; output is independent of `threads`.
Matrix similarity_matrix(std::span<const Matrix> layers, const TransformBank& bank,
                         std::size_t threads = 1);

struct CovarianceSummary {
  std::vector<double> mean_representation;
  Matrix covariance;
  EigResult eigen;
  double epsilon = 0.0;
};

/// Population covariance (1/N) Σ (x_i - x̄)(x_i - x̄)ᵀ of already-projected
/// samples. epsilon defaults to epsilon_scale * λ_max (floored at the
/// smallest positive normal double).
CovarianceSummary layer_covariance(std::span<const std::vector<double>> samples,
                                   double epsilon_scale = 1e-6);

/// Projects equal-shape layers through `bank` and summarizes them.
CovarianceSummary layer_covariance(std::span<const Matrix> layers, const TransformBank& bank,
                                   double epsilon_scale = 1e-6);

/// Eigen indices with λ < ε, ascending by λ.
std::vector<std::size_t> redundant_subspace(const CovarianceSummary& summary);

struct ThresholdPolicy {
  enum class Mode { EnergyBudget, Fixed };

  Mode mode = Mode::EnergyBudget;
  double energy_budget = 0.95;
  std::optional<double> fixed_tau;

  static ThresholdPolicy energy(double budget);
  static ThresholdPolicy fixed(double tau);

  /// Throws ValidationError when the active mode's parameter is out of range.
  void validate() const;
};

/// Singular-value cutoff τ. Energy mode returns the largest τ for which
/// {σ ≥ τ} carries at least energy_budget of Σσ²; a budget of 1 returns 0.
/// Fixed mode returns fixed_tau.
double dynamic_threshold(std::span<const double> singular_values, const ThresholdPolicy& policy);

/// Count of values σ ≥ tau.
std::size_t retained_count(std::span<const double> singular_values, double tau);

}  // namespace cce
