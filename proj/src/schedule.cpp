// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cce/error.hpp"
#include "cce/linalg.hpp"
#include "cce/numeric.hpp"

namespace cce {
namespace {

double geometric(double from, double to, double fraction) {
  return from * std::pow(to / from, fraction);
}

}  // namespace

std::size_t CompressedModel::stored_parameters() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.post_params;
  return n;
}

PlanEntry interpolate_entry(const PlanEntry& target, std::size_t step, std::size_t steps) {
  if (steps == 0 || step == 0 || step > steps) {
    throw ValidationError("schedule step " + std::to_string(step) + " outside [1, " +
                          std::to_string(steps) + "]");
  }
  if (target.lossless || step == steps) return target;
  const double f = static_cast<double>(step) / static_cast<double>(steps);
  const std::size_t full_rank = std::min(target.rows, target.cols);
  const std::size_t count = target.rows * target.cols;
  const std::size_t per_rank = target.rows + target.cols;
  const auto storage = static_cast<std::size_t>(std::llround(
      geometric(static_cast<double>(count), static_cast<double>(target.planned_parameters()), f)));
  PlanEntry e = target;
  if (storage >= count) {
    e.rank = full_rank;
    e.sparsity_budget = count;
    e.lossless = true;
    return e;
  }
  // Highest rank under the geometric rank ceiling that still leaves room
  // for at least the target residual.
  const auto ceiling = static_cast<std::size_t>(std::llround(
      geometric(static_cast<double>(full_rank), static_cast<double>(target.rank), f)));
  e.rank = target.rank;
  while (e.rank < ceiling && (e.rank + 1) * per_rank + target.rows + target.sparsity_budget <= storage) {
    ++e.rank;
  }
  e.sparsity_budget = std::min(count, storage - e.rank * per_rank - target.rows);
  return e;
}

CompressedModel run_schedule(const ModelParameters& model, const CompressionPlan& plan,
                             const LossConfig& loss, const ProbeSet& probe,
                             const ScheduleOptions& options) {
  plan.validate();
  probe.validate();
  const auto ids = model.compressible();
  loss.validate(ids.size());
  if (plan.entries.size() != ids.size()) {
    throw ValidationError("plan covers " + std::to_string(plan.entries.size()) +
                          " matrices, model has " + std::to_string(ids.size()));
  }
  if (!(options.divergence_ceiling > 1.0)) {
    throw ValidationError("divergence ceiling must exceed 1");
  }

  const auto reference = probe_outputs(model, probe, options.threads);
  double reference_energy = 0.0;
  for (const Matrix& r : reference) {
    for (double v : r.values()) reference_energy += v * v;
  }

  CompressedModel out;
  out.model = model;
  out.plan = plan;
  LossConfig config = loss;
  double previous = -1.0;
  for (std::size_t step = 1; step <= plan.schedule_steps; ++step) {
    std::vector<PlanEntry> entries(ids.size());
    std::vector<EncodedLayer> encoded(ids.size());
    parallel_for(ids.size(), options.threads, [&](std::size_t i) {
      entries[i] = interpolate_entry(plan.entry(ids[i]), step, plan.schedule_steps);
      if (!entries[i].lossless) encoded[i] = encode_layer(out.model.weight(ids[i]), entries[i]);
    });
    out.encoded.clear();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (entries[i].lossless) continue;
      out.model.weight(ids[i]) = decode_layer(encoded[i]);
      out.encoded.emplace(ids[i], std::move(encoded[i]));
    }

    if (options.fine_tune_steps > 0 && !out.encoded.empty()) {
      if (options.refresh_rank_targets && config.gamma != 0.0) {
        config.rank_targets.assign(ids.size(), 0.0);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          config.rank_targets[i] = nuclear_norm(out.model.weight(ids[i])) * plan.energy_budget;
        }
      }
      auto tuned = fine_tune(out.model, out.encoded, model, probe, config, options.fine_tune_steps,
                             options.step_size, options.threads);
      out.model = std::move(tuned.model);
      out.encoded = std::move(tuned.encoded);
      out.fine_tune_trajectory.insert(out.fine_tune_trajectory.end(), tuned.trajectory.begin(),
                                      tuned.trajectory.end());
    }

    const double rec = reconstruction_loss(reference, out.model, probe, options.threads);
    if (!std::isfinite(rec)) {
      throw DivergenceError("reconstruction loss is not finite at schedule step " +
                            std::to_string(step));
    }
    std::size_t params = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto it = out.encoded.find(ids[i]);
      params += it == out.encoded.end() ? entries[i].original_parameters()
                                        : it->second.stored_parameters();
    }
    out.trace.push_back({step, params, rec});
    const double floor = 1e-12 * std::max(reference_energy, 1.0);
    if (previous > floor && rec > options.divergence_ceiling * previous) {
      throw DivergenceError("reconstruction loss grew from " + std::to_string(previous) + " to " +
                            std::to_string(rec) + " at schedule step " + std::to_string(step) +
                            " (ceiling " + std::to_string(options.divergence_ceiling) + "x)");
    }
    previous = rec;
  }
  out.records = compression_records(model, out);
  return out;
}

std::vector<CompressionRecord> compression_records(const ModelParameters& original,
                                                   const CompressedModel& compressed) {
  std::vector<CompressionRecord> records;
  for (MatrixId id : original.compressible()) {
    CompressionRecord r;
    r.id = id;
    r.pre_params = original.weight(id).size();
    const auto it = compressed.encoded.find(id);
    r.post_params = it == compressed.encoded.end() ? r.pre_params : it->second.stored_parameters();
    r.ratio = compression_ratio(r.post_params, r.pre_params);
    r.frobenius_error = frobenius_norm(original.weight(id) - compressed.model.weight(id));
    records.push_back(r);
  }
  return records;
}

}  // namespace cce
