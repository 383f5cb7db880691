// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cmath>

#include "cce/error.hpp"
#include "cce/linalg.hpp"
#include "cce/schedule.hpp"

using namespace cce;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.layers = 4;
  c.hidden = 16;
  c.heads = 2;
  c.ffn = 32;
  c.vocab = 80;
  c.max_seq = 12;
  return c;
}

ModelParameters planted_small(std::uint64_t seed) {
  auto m = ModelParameters::random(small_config(), seed, 0.3);
  const std::size_t mid[] = {1, 2};
  plant_redundancy(m, mid, 2, 0.01, seed + 1);
  return m;
}

ProbeSet small_probe() {
  return ProbeSet::uniform(synthetic_corpus(7, 8, 10, layout_for(small_config()), 4));
}

PlanOptions no_floor(std::size_t steps) {
  PlanOptions o;
  o.schedule_steps = steps;
  o.end_layer_energy = 0.0;
  return o;
}

ScheduleOptions plain() {
  ScheduleOptions o;
  o.fine_tune_steps = 0;
  return o;
}

}  // namespace

TEST_CASE("interpolated entries shrink towards the target") {
  PlanEntry target{{0, MatrixKind::FeedForwardIn}, 64, 256, 20, 3, 4000, 0.5, false};
  const std::size_t steps = 5;
  std::size_t previous = target.original_parameters();
  for (std::size_t step = 1; step <= steps; ++step) {
    const auto e = interpolate_entry(target, step, steps);
    CHECK_NOTHROW(e.validate());
    CHECK(e.planned_parameters() <= previous);
    previous = e.planned_parameters();
    if (e.lossless) continue;
    CHECK(e.rank >= target.rank);
    CHECK(e.sparsity_budget >= target.sparsity_budget);
    CHECK(e.order == target.order);
  }
  CHECK(interpolate_entry(target, steps, steps).planned_parameters() == target.planned_parameters());
  // Storage follows the geometric path from dense.
  const double ratio = static_cast<double>(target.planned_parameters()) / target.original_parameters();
  const auto first = interpolate_entry(target, 1, steps);
  CHECK(static_cast<double>(first.planned_parameters()) ==
        doctest::Approx(target.original_parameters() * std::pow(ratio, 0.2)).epsilon(1e-3));

  PlanEntry dense = target;
  dense.lossless = true;
  CHECK(interpolate_entry(dense, 1, steps).lossless);
  CHECK_THROWS_AS(interpolate_entry(target, 0, steps), ValidationError);
  CHECK_THROWS_AS(interpolate_entry(target, 6, steps), ValidationError);
}

TEST_CASE("single step at full budget leaves the model unchanged") {
  const auto m = planted_small(3);
  const auto plan = plan_compression(m, 1.0, ThresholdPolicy{}, no_floor(1));
  const auto out = run_schedule(m, plan, LossConfig{}, small_probe(), plain());
  CHECK(out.model == m);
  CHECK(out.encoded.empty());
  REQUIRE(out.trace.size() == 1);
  CHECK(out.trace[0].reconstruction_loss == 0.0);
  for (const auto& r : out.records) {
    CHECK(r.ratio == 1.0);
    CHECK(r.frobenius_error == 0.0);
  }
}

TEST_CASE("scheduled compression of a planted model") {
  const auto m = planted_small(5);
  const auto probe = small_probe();
  const auto plan = plan_compression(m, 0.6, ThresholdPolicy{}, no_floor(3));
  const auto out = run_schedule(m, plan, LossConfig{}, probe, plain());

  REQUIRE(out.trace.size() == 3);
  for (std::size_t i = 1; i < out.trace.size(); ++i) {
    CHECK(out.trace[i].parameters <= out.trace[i - 1].parameters);
  }
  CHECK(out.trace.back().parameters == plan.planned_parameters());
  CHECK(out.stored_parameters() == plan.planned_parameters());

  // Records agree with an independent recount of the stored encodings.
  std::size_t total = 0;
  for (const auto& r : out.records) {
    const auto it = out.encoded.find(r.id);
    std::size_t n = r.pre_params;
    if (it != out.encoded.end()) {
      const auto& e = it->second;
      n = e.left.size() + e.right.size() + e.residual.size() + e.rescale.size();
      CHECK(max_abs_diff(decode_layer(e), out.model.weight(r.id)) == 0.0);
    }
    CHECK(r.post_params == n);
    CHECK(r.ratio == doctest::Approx(static_cast<double>(n) / r.pre_params));
    CHECK(r.frobenius_error ==
          doctest::Approx(frobenius_norm(m.weight(r.id) - out.model.weight(r.id))));
    total += n;
  }
  CHECK(total == out.stored_parameters());
  CHECK(out.trace.back().reconstruction_loss ==
        doctest::Approx(reconstruction_loss(m, out.model, probe)));

  // With fine-tuning between steps, never catastrophically worse than
  // compressing in one shot.
  auto single = plan;
  single.schedule_steps = 1;
  ScheduleOptions tuned;
  tuned.step_size = 1e-4;
  const auto scheduled = run_schedule(m, plan, LossConfig{}, probe, tuned);
  const auto once = run_schedule(m, single, LossConfig{}, probe, tuned);
  CHECK(scheduled.trace.back().reconstruction_loss <= 2.0 * once.trace.back().reconstruction_loss);
}

TEST_CASE("schedule is deterministic and thread independent") {
  const auto m = planted_small(8);
  const auto probe = small_probe();
  const auto plan = plan_compression(m, 0.5, ThresholdPolicy{}, no_floor(2));
  ScheduleOptions options;
  options.fine_tune_steps = 3;
  options.step_size = 1e-3;
  const auto a = run_schedule(m, plan, LossConfig{}, probe, options);
  options.threads = 3;
  const auto b = run_schedule(m, plan, LossConfig{}, probe, options);
  CHECK(a.model == b.model);
  CHECK(a.encoded == b.encoded);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].post_params == b.records[i].post_params);
    CHECK(a.records[i].frobenius_error == b.records[i].frobenius_error);
  }
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].reconstruction_loss == b.trace[i].reconstruction_loss);
  }
  CHECK(a.fine_tune_trajectory.size() == 2 * 4);
}

TEST_CASE("fine-tuning inside the schedule keeps the plan") {
  const auto m = planted_small(9);
  const auto probe = small_probe();
  const auto plan = plan_compression(m, 0.5, ThresholdPolicy{}, no_floor(2));
  ScheduleOptions options;
  options.fine_tune_steps = 5;
  options.step_size = 1e-3;
  const auto tuned = run_schedule(m, plan, LossConfig{}, probe, options);
  const auto untuned = run_schedule(m, plan, LossConfig{}, probe, plain());
  CHECK(tuned.trace.back().reconstruction_loss <= untuned.trace.back().reconstruction_loss);
  for (const auto& [id, e] : tuned.encoded) {
    const auto& p = plan.entry(id);
    CHECK(e.rank() == p.rank);
    CHECK(e.residual.size() <= p.sparsity_budget);
  }
}

TEST_CASE("rank targets are refreshed from the nuclear norm") {
  const auto m = planted_small(10);
  const auto plan = plan_compression(m, 0.6, ThresholdPolicy{}, no_floor(1));
  LossConfig loss;
  loss.gamma = 1e-6;
  loss.lambda.assign(m.compressible().size(), 1.0);
  ScheduleOptions options;
  options.fine_tune_steps = 2;
  options.step_size = 1e-4;
  const auto out = run_schedule(m, plan, loss, small_probe(), options);
  REQUIRE(out.fine_tune_trajectory.size() == 3);
  // Targets are nuclear norm x energy budget, so reg starts at
  // sum (1 - budget)^2 ||W||_*^2 over the encoded weights.
  double expected = 0.0;
  ModelParameters start = m;
  for (MatrixId id : m.compressible()) {
    const auto& e = plan.entry(id);
    if (!e.lossless) start.weight(id) = decode_layer(encode_layer(m.weight(id), e));
    const double gap = nuclear_norm(start.weight(id)) * (1.0 - plan.energy_budget);
    expected += gap * gap;
  }
  CHECK(out.fine_tune_trajectory.front().reg == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("divergence aborts the schedule") {
  const auto m = planted_small(11);
  const auto plan = plan_compression(m, 0.2, ThresholdPolicy{}, no_floor(4));
  ScheduleOptions options = plain();
  options.divergence_ceiling = 1.0000001;
  CHECK_THROWS_AS(run_schedule(m, plan, LossConfig{}, small_probe(), options), DivergenceError);
  options.divergence_ceiling = 1.0;
  CHECK_THROWS_AS(run_schedule(m, plan, LossConfig{}, small_probe(), options), ValidationError);
}

TEST_CASE("schedule rejects mismatched plans") {
  const auto m = planted_small(12);
  auto plan = plan_compression(m, 0.6, ThresholdPolicy{}, no_floor(1));
  plan.entries.pop_back();
  CHECK_THROWS_AS(run_schedule(m, plan, LossConfig{}, small_probe(), plain()), ValidationError);
}
