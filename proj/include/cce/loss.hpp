// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/encoded.hpp"
#include "cce/matrix.hpp"
#include "cce/model.hpp"

namespace cce {

/// Coefficients of total = alpha*rec + beta*sim + gamma*reg. lambda and
/// rank_targets hold one value per compressible matrix (model order); empty
/// vectors mean zeros.
struct LossConfig {
  double alpha = 1.0;
  double beta = 0.0;
  double gamma = 0.0;
  std::vector<double> lambda;
  std::vector<double> rank_targets;
  double tau = 0.0;
  std::size_t sparsity_k = 0;  // recorded for reports; the plan enforces it

  void validate(std::size_t layer_count) const;
};

struct ProbeSet {
  std::vector<TokenSequence> inputs;
  std::vector<double> weights;

  static ProbeSet uniform(std::vector<TokenSequence> inputs);
  /// Non-empty, positive weights summing to 1 within 1e-12.
  void validate() const;
};

struct LossBreakdown {
  double rec = 0.0;
  double sim = 0.0;
  double reg = 0.0;
  double total = 0.0;
};

/// Output logits of the model on every probe input, in probe order.
std::vector<Matrix> probe_outputs(const ModelParameters& model, const ProbeSet& probe,
                                  std::size_t threads = 1);

/// Σ weight(x) · ‖f(original, x) − f(compressed, x)‖², f = output logits.
double reconstruction_loss(const ModelParameters& original, const ModelParameters& compressed,
                           const ProbeSet& probe, std::size_t threads = 1);
double reconstruction_loss(std::span<const Matrix> original_outputs,
                           const ModelParameters& compressed, const ProbeSet& probe,
                           std::size_t threads = 1);

/// Σ over layers and singular values of σ · 1{σ < tau}.
double similarity_loss(std::span<const Matrix> layers, double tau);

/// Σᵢ λᵢ (‖Wᵢ‖_* − rᵢ)².
double regularization_loss(std::span<const Matrix> layers, std::span<const double> lambda,
                           std::span<const double> rank_targets);

/// The compressible matrices of a model in compressible() order.
std::vector<Matrix> compressible_layers(const ModelParameters& model);

LossBreakdown total_loss(const ModelParameters& original, const ModelParameters& compressed,
                         const ProbeSet& probe, const LossConfig& config, std::size_t threads = 1);
LossBreakdown total_loss(std::span<const Matrix> original_outputs,
                         const ModelParameters& compressed, const ProbeSet& probe,
                         const LossConfig& config, std::size_t threads = 1);

/// d(total)/d(W) for each compressible matrix of `compressed`, in
/// compressible() order.
std::vector<Matrix> loss_gradient(const ModelParameters& original,
                                  const ModelParameters& compressed, const ProbeSet& probe,
                                  const LossConfig& config, std::size_t threads = 1);
std::vector<Matrix> loss_gradient(std::span<const Matrix> original_outputs,
                                  const ModelParameters& compressed, const ProbeSet& probe,
                                  const LossConfig& config, std::size_t threads = 1);

/// Largest relative gap between `analytic` and central differences of
/// `total_loss` over `samples` entries per matrix (all entries when 0).
struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t worst_layer = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};
GradientCheck check_gradient(const ModelParameters& original, const ModelParameters& compressed,
                             const ProbeSet& probe, const LossConfig& config, double step,
                             std::size_t samples, std::uint64_t seed);

/// Chain rule from d(total)/d(W) to the factor, residual and gain
/// parameters of an encoded layer.
EncodedLayer encoded_gradient(const EncodedLayer& enc, const Matrix& dense_gradient);

struct FineTuneResult {
  FactoredWeights encoded;                 // best-seen parameters
  ModelParameters model;                   // dense view with decoded weights
  std::vector<LossBreakdown> trajectory;   // loss before each step, then after the last
  std::size_t best_step = 0;               // index into trajectory
};

/// Gradient descent on total_loss over the factors, residual values and
/// gains of every encoded layer. Rank and residual support stay fixed.
/// `compressed` carries the decoded weights of `encoded` plus every other
/// tensor, which stays frozen. A step that fails to improve on the best
/// point restarts from it with half the step size. Returns the best-seen
/// point.
FineTuneResult fine_tune(const ModelParameters& compressed, const FactoredWeights& encoded,
                         const ModelParameters& original, const ProbeSet& probe,
                         const LossConfig& config, std::size_t steps, double step_size,
                         std::size_t threads = 1);

}  // namespace cce
