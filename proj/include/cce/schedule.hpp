// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "cce/engine.hpp"
#include "cce/loss.hpp"
#include "cce/model.hpp"

namespace cce {

struct ScheduleOptions {
  std::size_t fine_tune_steps = 10;  // gradient steps after each schedule step
  double step_size = 5e-5;
  double divergence_ceiling = 10.0;  // max step-over-step growth of the reconstruction loss
  bool refresh_rank_targets = true;  // r_i <- nuclear norm x energy budget at each step
  std::size_t threads = 1;
};

struct ScheduleStep {
  std::size_t step = 0;  // 1-based
  std::size_t parameters = 0;
  double reconstruction_loss = 0.0;
};

struct CompressedModel {
  ModelParameters model;    // dense view: decoded weights in place
  FactoredWeights encoded;  // every non-lossless matrix
  CompressionPlan plan;
  std::vector<CompressionRecord> records;
  std::vector<ScheduleStep> trace;
  std::vector<LossBreakdown> fine_tune_trajectory;  // concatenated over steps

  std::size_t stored_parameters() const;
};

/// The plan entry in force at `step` of `steps`. Stored parameters shrink
/// geometrically from dense to the target; the rank stays under a geometric
/// ceiling from full rank down to the target rank, and the residual takes the
/// rest, never dropping below the target residual. Entries whose
/// interpolated storage is not below dense stay lossless for that step.
PlanEntry interpolate_entry(const PlanEntry& target, std::size_t step, std::size_t steps);

/// Compresses in plan.schedule_steps rounds, each re-encoding the previous
/// round's weights at the interpolated budgets, optionally fine-tuning, and
/// recording the reconstruction loss on the probe set. Throws DivergenceError
/// when the loss grows by more than the ceiling between rounds.
CompressedModel run_schedule(const ModelParameters& model, const CompressionPlan& plan,
                             const LossConfig& loss, const ProbeSet& probe,
                             const ScheduleOptions& options = {});

/// Per-matrix storage and error of `compressed` against `original`.
std::vector<CompressionRecord> compression_records(const ModelParameters& original,
                                                   const CompressedModel& compressed);

}  // namespace cce
