// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cce/encoded.hpp"
#include "cce/matrix.hpp"
#include "cce/model.hpp"
#include "cce/redundancy.hpp"

namespace cce {

/// Best rank-≤r Frobenius approximation (truncated SVD).
/// Throws ValidationError unless 1 ≤ r ≤ min(rows, cols).
Matrix truncated_approximation(const Matrix& w, std::size_t r);

/// Keeps the k largest-magnitude entries. Ties go to the earlier entry in
/// row-major order. Throws ValidationError when k exceeds the entry count.
Matrix sparsify_top_k(const Matrix& w, std::size_t k);

/// compressed / original. Throws ValidationError when original is 0.
double compression_ratio(std::size_t compressed_count, std::size_t original_count);

/// How an encoded layer splits into factors and residual.
enum class EncodingOrder : std::uint8_t {
  ResidualFirst,  // keep the k largest entries, fit rank r to the rest
  FactorsFirst,   // rank-r truncation, then the k largest remainder entries
};

std::string_view encoding_order_name(EncodingOrder order);
EncodingOrder parse_encoding_order(std::string_view name);

struct PlanEntry {
  MatrixId id;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t energy_rank = 0;      // count of σ ≥ tau under the layer's policy
  std::size_t rank = 0;             // target r of the factor pair
  std::size_t sparsity_budget = 0;  // k: residual nonzeros (rows*cols when lossless)
  double tau = 0.0;
  bool lossless = false;  // stored dense, untouched
  EncodingOrder order = EncodingOrder::ResidualFirst;

  std::size_t original_parameters() const { return rows * cols; }
  /// Factor + residual + rescale storage, or rows*cols when lossless.
  std::size_t planned_parameters() const;
  void validate() const;
};

struct CompressionPlan {
  std::vector<PlanEntry> entries;
  double global_budget = 1.0;
  double energy_budget = 0.95;
  std::size_t schedule_steps = 1;

  std::size_t original_parameters() const;
  std::size_t planned_parameters() const;
  const PlanEntry& entry(MatrixId id) const;
  void validate() const;
};

struct PlanOptions {
  double end_layer_energy = 0.98;  // minimum retained energy for the first and last block
  std::size_t schedule_steps = 3;
  EncodingOrder order = EncodingOrder::ResidualFirst;
  std::size_t residual_grid = 32;  // residual sizes tried per matrix when tracing its error curve
  std::size_t threads = 1;
};

/// A weight matrix offered to the planner.
struct PlanInput {
  MatrixId id;
  const Matrix* weight = nullptr;
  bool end_layer = false;
};

/// Allocates ranks and residual budgets across matrices so the planned
/// storage stays within global_budget of the original. Each matrix's rank is
/// capped by its energy rank; within that cap the planner picks the split of
/// storage between factors and residual with the smallest squared Frobenius
/// error, and spreads storage across matrices by equalizing marginal error
/// reduction, so the summed error over all matrices is minimized.
/// End layers must retain end_layer_energy (Frobenius) of their weight.
/// Throws PlanningError when the end-layer floors use more than the budget.
CompressionPlan plan_layers(std::span<const PlanInput> inputs, double global_budget,
                            const ThresholdPolicy& policy, const PlanOptions& options = {});

/// plan_layers over every compressible matrix; blocks 0 and layers-1 are end layers.
CompressionPlan plan_compression(const ModelParameters& model, double global_budget,
                                 const ThresholdPolicy& policy, const PlanOptions& options = {});

/// Rank-r factors and a k-entry residual split per entry.order, then a
/// per-row gain that moves each row's norm towards the original row norm as
/// far as possible without increasing that row's error.
EncodedLayer encode_layer(const Matrix& w, const PlanEntry& entry);

struct CompressionRecord {
  MatrixId id;
  std::size_t pre_params = 0;
  std::size_t post_params = 0;
  double ratio = 1.0;
  double frobenius_error = 0.0;
};

/// Stored-parameter ratio per block, aggregated over its matrices.
std::vector<double> block_ratios(std::span<const CompressionRecord> records, std::size_t layers);

/// Per-matrix top-k with k = floor(budget * rows * cols).
ModelParameters baseline_magnitude_prune(const ModelParameters& model, double budget);
/// Stored nonzero count of baseline_magnitude_prune at this budget.
std::size_t magnitude_prune_parameters(const ModelParameters& model, double budget);

/// Per-matrix affine quantization to 2^bits levels over [min, max], dequantized.
Matrix uniform_quantize(const Matrix& w, unsigned bits);
ModelParameters baseline_uniform_quantize(const ModelParameters& model, unsigned bits);

/// Replaces every compressible matrix of the listed blocks by a rank-`rank`
/// matrix of the same Frobenius norm plus `noise` relative Gaussian noise.
void plant_redundancy(ModelParameters& model, std::span<const std::size_t> blocks,
                      std::size_t rank, double noise, std::uint64_t seed);

}  // namespace cce
