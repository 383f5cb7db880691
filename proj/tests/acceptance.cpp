// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cce/engine.hpp"
#include "cce/error.hpp"
#include "cce/linalg.hpp"
#include "cce/loss.hpp"
#include "cce/numeric.hpp"
#include "cce/pipeline.hpp"
#include "test_support.hpp"

using namespace cce;
using cce::testing::oracle_singular_values;
using cce::testing::random_matrix;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

// ---------------------------------------------------------------------------
// 1. Truncated SVD against random rank-r competitors.
Outcome eckart_young() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst_margin = INFINITY;
  double worst_rel = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.below(8), n = 1 + rng.below(8);
    const Matrix w = random_matrix(m, n, rng);
    const std::size_t r = 1 + rng.below(std::min(m, n));
    const Matrix best = truncated_approximation(w, r);
    const double err = frobenius_norm(w - best);
    const auto sigma = oracle_singular_values(w);
    double tail = 0.0;
    for (std::size_t i = r; i < sigma.size(); ++i) tail += sigma[i] * sigma[i];
    const double expected = std::sqrt(tail);
    const double rel = std::abs(err - expected) / std::max(expected, 1e-300);
    if (expected > 1e-12) {
      worst_rel = std::max(worst_rel, rel);
    } else {
      worst_rel = std::max(worst_rel, std::abs(err - expected));
    }
    for (int p = 0; p < 50; ++p) {
      // Half the probes are independent, half are small perturbations of
      // the optimum, which is where a suboptimal answer would show.
      Matrix probe = p % 2 == 0 ? matmul(random_matrix(m, r, rng), random_matrix(r, n, rng))
                                : best + 1e-3 * matmul(random_matrix(m, r, rng), random_matrix(r, n, rng));
      if (p % 2 == 1) probe = truncated_approximation(probe, r);
      worst_margin = std::min(worst_margin, frobenius_norm(w - probe) - err);
    }
  }
  const double t = seconds_since(start);
  return {worst_margin >= -1e-8 && worst_rel <= 1e-8 && t < 10.0,
          fmt("worst probe margin %.3g, worst tail mismatch %.3g, %.2f s", worst_margin, worst_rel, t)};
}

// 2. Top-k against exhaustive support search.
Outcome l0_projection() {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(202);
  std::size_t cases = 0, failures = 0;
  for (std::size_t m = 1; m <= 3; ++m) {
    for (std::size_t n = 1; n <= 3; ++n) {
      for (int trial = 0; trial < 60; ++trial) {
        Matrix w(m, n);
        // Include integer draws so ties occur.
        for (double& v : w.values()) {
          v = trial % 3 == 0 ? static_cast<double>(static_cast<int>(rng.below(5)) - 2) : rng.normal();
        }
        const std::size_t count = m * n;
        for (std::size_t k = 0; k <= std::min<std::size_t>(4, count); ++k) {
          const Matrix s = sparsify_top_k(w, k);
          double err = 0.0;
          std::size_t nnz = 0;
          bool subset = true;
          for (std::size_t i = 0; i < count; ++i) {
            const double sv = s.values()[i], wv = w.values()[i];
            if (sv != 0.0) {
              ++nnz;
              subset = subset && sv == wv;
            }
            err += (wv - sv) * (wv - sv);
          }
          double best = INFINITY;
          for (std::uint32_t mask = 0; mask < (1u << count); ++mask) {
            if (static_cast<std::size_t>(std::popcount(mask)) != k) continue;
            double e = 0.0;
            for (std::size_t i = 0; i < count; ++i) {
              if (!(mask >> i & 1u)) e += w.values()[i] * w.values()[i];
            }
            best = std::min(best, e);
          }
          ++cases;
          if (!(subset && nnz <= k && std::abs(err - best) <= 1e-12 * std::max(1.0, best))) ++failures;
        }
      }
    }
  }
  const double t = seconds_since(start);
  return {failures == 0 && t < 5.0, fmt("%zu cases, %zu mismatches, %.2f s", cases, failures, t)};
}

// Fixtures for the loss criteria.
ModelConfig loss_config_model() {
  ModelConfig c;
  c.layers = 2;
  c.hidden = 8;
  c.heads = 2;
  c.ffn = 12;
  c.vocab = 11;
  c.max_seq = 8;
  return c;
}

ProbeSet random_probe(const ModelConfig& c, std::size_t count, std::size_t length, Rng& rng) {
  std::vector<TokenSequence> inputs;
  for (std::size_t i = 0; i < count; ++i) {
    TokenSequence t(length);
    for (Token& v : t) v = static_cast<Token>(rng.below(c.vocab));
    inputs.push_back(t);
  }
  return ProbeSet::uniform(std::move(inputs));
}

ModelParameters perturbed(const ModelParameters& m, double scale, Rng& rng) {
  ModelParameters out = m;
  for (MatrixId id : out.compressible()) {
    for (double& v : out.weight(id).values()) v += scale * rng.normal();
  }
  return out;
}

LossConfig random_loss(const ModelParameters& m, Rng& rng) {
  LossConfig c;
  c.alpha = rng.uniform();
  c.beta = rng.uniform();
  c.gamma = rng.uniform();
  for (std::size_t i = 0; i < m.compressible().size(); ++i) {
    c.lambda.push_back(rng.uniform());
    c.rank_targets.push_back(3.0 * rng.uniform());
  }
  c.tau = 0.5 + rng.uniform();
  return c;
}

// Gap between tau and the nearest singular value, and between neighbouring
// singular values (the nuclear norm gradient needs distinct values).
double tie_margin(const ModelParameters& m, double tau) {
  double gap = INFINITY;
  for (const Matrix& w : compressible_layers(m)) {
    const auto s = singular_values(w);
    for (std::size_t i = 0; i < s.size(); ++i) {
      gap = std::min(gap, std::abs(s[i] - tau));
      if (i > 0) gap = std::min(gap, s[i - 1] - s[i]);
    }
  }
  return gap;
}

// 3. Analytic gradient against central differences, and linearity.
Outcome gradients() {
  const ModelConfig c = loss_config_model();
  Rng rng(303);
  double worst = 0.0;
  int checked = 0;
  for (int trial = 0; checked < 20; ++trial) {
    const auto m = ModelParameters::random(c, 1000 + trial, 0.4);
    const auto other = perturbed(m, 0.05, rng);
    const LossConfig config = random_loss(m, rng);
    if (tie_margin(other, config.tau) < 1e-3) continue;
    const auto probe = random_probe(c, 3, 6, rng);
    worst = std::max(worst, check_gradient(m, other, probe, config, 1e-5, 16, trial).max_relative_error);
    ++checked;
  }
  double linear = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const auto m = ModelParameters::random(c, 2000 + trial, 0.4);
    const auto other = perturbed(m, 0.05, rng);
    const auto probe = random_probe(c, 3, 6, rng);
    const LossConfig base = random_loss(m, rng);
    auto unit = [&](double a, double b, double g) {
      LossConfig u = base;
      u.alpha = a;
      u.beta = b;
      u.gamma = g;
      return loss_gradient(m, other, probe, u);
    };
    const auto full = loss_gradient(m, other, probe, base);
    const auto gr = unit(1, 0, 0), gs = unit(0, 1, 0), gg = unit(0, 0, 1);
    for (std::size_t l = 0; l < full.size(); ++l) {
      const Matrix sum = base.alpha * gr[l] + base.beta * gs[l] + base.gamma * gg[l];
      linear = std::max(linear, max_abs_diff(full[l], sum));
    }
  }
  return {worst <= 1e-4 && linear <= 1e-10,
          fmt("%d configs, worst relative error %.3g; linearity residual %.3g", checked, worst, linear)};
}

// 4. total = alpha rec + beta sim + gamma reg.
Outcome decomposition() {
  const ModelConfig c = loss_config_model();
  Rng rng(404);
  double worst = 0.0;
  bool nonneg = true;
  double self_rec = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto m = ModelParameters::random(c, 3000 + trial, 0.4);
    const auto other = perturbed(m, 0.2 * rng.uniform(), rng);
    const auto probe = random_probe(c, 1 + rng.below(4), 2 + rng.below(6), rng);
    const LossConfig config = random_loss(m, rng);
    const auto b = total_loss(m, other, probe, config);
    worst = std::max(worst, std::abs(b.total - (config.alpha * b.rec + config.beta * b.sim +
                                                config.gamma * b.reg)));
    nonneg = nonneg && b.rec >= 0.0 && b.sim >= 0.0 && b.reg >= 0.0;
    self_rec = std::max(self_rec, total_loss(m, m, probe, config).rec);
  }
  return {worst <= 1e-12 && nonneg && self_rec == 0.0,
          fmt("50 configs, worst residual %.3g, terms non-negative: %s, rec(self) = %g", worst,
              nonneg ? "yes" : "no", self_rec)};
}

// Shared trained models and compress reports for the model-level criteria.
struct SeedRun {
  std::uint64_t seed;
  Checkpoint model;
  CompressOutput compressed;
  double compress_seconds;
};

std::vector<SeedRun>& runs() {
  static std::vector<SeedRun> all;
  return all;
}

PipelineConfig defaults() { return PipelineConfig{}; }

void prepare_runs() {
  for (std::uint64_t seed : kSeeds) {
    RunOptions o;
    o.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    auto trained = cmd_train(defaults(), o).checkpoint;
    const double train_s = seconds_since(t0);
    const auto t1 = std::chrono::steady_clock::now();
    auto out = cmd_compress(trained, defaults(), o);
    const double compress_s = seconds_since(t1);
    std::fprintf(stderr, "seed %llu: trained in %.1f s, compressed in %.1f s\n",
                 static_cast<unsigned long long>(seed), train_s, compress_s);
    runs().push_back({seed, std::move(trained), std::move(out), compress_s});
  }
}

// 5. Budget 1.0 reproduces every metric bit for bit.
Outcome lossless_noop() {
  const auto& run = runs().front();
  PipelineConfig c = defaults();
  c.budget = 1.0;
  RunOptions o;
  o.seed = run.seed;
  const auto out = cmd_compress(run.model, c, o);
  const auto loaded = deserialize_checkpoint(serialize_checkpoint(out.checkpoint));
  const auto data = evaluation_data(c, run.seed);
  const Json before = model_metrics(run.model.model, data, c);
  const Json after = model_metrics(loaded.model, data, c);
  bool ratios = true;
  for (const auto& r : out.report["tables"]["layer_compression"]["records"]) {
    ratios = ratios && r["ratio"].get<double>() == 1.0;
  }
  const bool same = before["perplexity"] == after["perplexity"] &&
                    before["activations"] == after["activations"] &&
                    before["attention"] == after["attention"] && before["accuracy"] == after["accuracy"];
  return {same && ratios && loaded.encoded.empty(),
          fmt("metrics bit-identical: %s, all ratios 1: %s, perplexity %.6f", same ? "yes" : "no",
              ratios ? "yes" : "no", after["perplexity"].get<double>())};
}

double block_ratio(const CompressionPlan& plan, std::size_t block) {
  double planned = 0.0, original = 0.0;
  for (const auto& e : plan.entries) {
    if (e.id.block != block) continue;
    planned += static_cast<double>(e.planned_parameters());
    original += static_cast<double>(e.original_parameters());
  }
  return planned / original;
}

// 6. Planted mid-layer redundancy gets the lowest ratios.
Outcome mid_layer_trend() {
  const auto start = std::chrono::steady_clock::now();
  int passing = 0;
  std::string detail;
  for (const auto& run : runs()) {
    ModelParameters m = run.model.model;
    const std::size_t mid[] = {2, 3};
    plant_redundancy(m, mid, 2, 0.01, mix_seed(run.seed, 66));
    const auto plan = plan_compression(m, 0.6, defaults().threshold, defaults().plan);
    ScheduleOptions so;
    so.fine_tune_steps = 0;
    const auto data = evaluation_data(defaults(), run.seed);
    const auto out = run_schedule(m, plan, LossConfig{}, data.probe, so);
    const auto achieved = block_ratios(out.records, m.config.layers);
    const std::size_t last = m.config.layers - 1;
    const double p_mid = std::max(block_ratio(plan, 2), block_ratio(plan, 3));
    const double p_end = std::min(block_ratio(plan, 0), block_ratio(plan, last));
    const double a_mid = std::max(achieved[2], achieved[3]);
    const double a_end = std::min(achieved[0], achieved[last]);
    const bool ok = p_mid < p_end && a_mid < a_end;
    passing += ok;
    detail += fmt(" s%llu mid %.3f/%.3f end %.3f/%.3f;", static_cast<unsigned long long>(run.seed),
                  p_mid, a_mid, p_end, a_end);
  }
  const double t = seconds_since(start);
  return {passing == 5 && t < 120.0,
          fmt("%d/5 seeds (planned/achieved):", passing) + detail + fmt(" %.1f s", t)};
}

// 7. Perplexity versus magnitude pruning at the same budget.
Outcome fidelity_ordering() {
  int wins = 0;
  bool below_vocab = true;
  std::string detail;
  const double vocab = static_cast<double>(defaults().model.vocab);
  for (const auto& run : runs()) {
    const auto& models = run.compressed.report["models"];
    const double cce = models["cce"]["perplexity"].get<double>();
    const double mag = models["magnitude"]["perplexity"].get<double>();
    wins += cce <= mag;
    below_vocab = below_vocab && cce < vocab && mag < vocab;
    detail += fmt(" s%llu %.3f vs %.3f;", static_cast<unsigned long long>(run.seed), cce, mag);
  }
  return {wins >= 4 && below_vocab, fmt("CCE <= magnitude in %d/5 (cce vs magnitude):", wins) + detail};
}

// 8. Activation stability after fine-tuning.
Outcome stability_trend() {
  int passing = 0;
  std::string detail;
  for (const auto& run : runs()) {
    const auto& blocks = run.compressed.report["tables"]["stability"]["blocks"];
    double worst_mean = 0.0;
    std::size_t argmax = 0;
    double largest = -INFINITY;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const double pre = blocks[b]["mean_pre"].get<double>();
      const double post = blocks[b]["mean_post"].get<double>();
      worst_mean = std::max(worst_mean, pre == 0.0 ? INFINITY : std::abs(post / pre - 1.0));
      const double change = blocks[b]["stddev_post"].get<double>() / blocks[b]["stddev_pre"].get<double>() - 1.0;
      if (change > largest) {
        largest = change;
        argmax = b;
      }
    }
    const bool middle = argmax >= 1 && argmax + 1 < blocks.size();
    const bool ok = worst_mean <= 0.15 && middle;
    passing += ok;
    detail += fmt(" s%llu worst mean shift %.1f%%, largest std change %+.2f%% at block %zu;",
                  static_cast<unsigned long long>(run.seed), 100.0 * worst_mean, 100.0 * largest, argmax);
  }
  return {passing >= 4, fmt("%d/5 seeds:", passing) + detail};
}

bool near_monotone(const std::vector<double>& curve) {
  int inversions = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double rise = curve[i] - curve[i - 1];
    if (rise > 0.0) {
      ++inversions;
      if (rise > 0.01 + 1e-12) return false;
    }
  }
  return inversions <= 1;
}

// 9. Robustness curves.
Outcome robustness() {
  const auto& levels = defaults().evaluation.noise_levels;
  bool monotone = true;
  int wins = 0;
  std::string detail;
  for (const auto& run : runs()) {
    const auto& curves = run.compressed.report["tables"]["robustness"]["curves"];
    for (const auto& [name, c] : curves.items()) monotone = monotone && near_monotone(c.get<std::vector<double>>());
    const auto cce = curves["cce"].get<std::vector<double>>();
    const auto mag = curves["magnitude"].get<std::vector<double>>();
    bool ok = true;
    for (std::size_t i = 0; i < levels.size(); ++i) {
      if (levels[i] >= 0.3 - 1e-12) ok = ok && cce[i] >= mag[i];
    }
    wins += ok;
    detail += fmt(" s%llu cce %.3f/%.3f/%.3f mag %.3f/%.3f/%.3f;", static_cast<unsigned long long>(run.seed),
                  cce[3], cce[4], cce[5], mag[3], mag[4], mag[5]);
  }
  return {monotone && wins >= 4,
          fmt("curves near-monotone: %s, CCE >= magnitude at >= 30%% in %d/5 (levels .3/.4/.5):",
              monotone ? "yes" : "no", wins) + detail};
}

// 10. Byte-identical compress output across runs and thread counts.
Outcome determinism() {
  const auto& run = runs().front();
  RunOptions o;
  o.seed = run.seed;
  o.threads = 3;
  const auto again = cmd_compress(run.model, defaults(), o);
  const bool ckpt = serialize_checkpoint(again.checkpoint) == serialize_checkpoint(run.compressed.checkpoint);
  const bool report = again.report.dump(2) == run.compressed.report.dump(2);
  return {ckpt && report, fmt("checkpoint identical: %s, report identical: %s (1 vs 3 threads)",
                              ckpt ? "yes" : "no", report ? "yes" : "no")};
}

// 11. Round trip and corruption fuzz.
Outcome checkpoint_robustness() {
  const auto bytes = serialize_checkpoint(runs().front().compressed.checkpoint);
  const bool round = serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes;
  Rng rng(1111);
  int silent = 0, detected = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto bad = bytes;
    bad[rng.below(bad.size())] ^= static_cast<std::uint8_t>(1 + rng.below(255));
    try {
      (void)deserialize_checkpoint(bad);
      ++silent;
    } catch (const ChecksumError&) {
      ++detected;
    } catch (const Error&) {
      ++detected;
    }
  }
  return {round && silent == 0 && detected == 1000,
          fmt("round trip identical: %s, %d/1000 corruptions detected, %d silent loads (%zu bytes)",
              round ? "yes" : "no", detected, silent, bytes.size())};
}

// 12. Factored layer cost against r(m+n)/(mn).
Outcome latency_model() {
  const Json b = cmd_bench(runs().front().compressed.checkpoint, defaults(), RunOptions{});
  bool ok = b["layers"].size() == 2;
  std::string detail;
  for (const auto& l : b["layers"]) {
    const double pred = l["predicted_ratio"].get<double>();
    const double meas = l["measured_ratio"].get<double>();
    ok = ok && meas <= 2.0 * pred && meas >= 0.5 * pred;
    detail += fmt(" r=%zu predicted %.3f measured %.3f;", l["rank"].get<std::size_t>(), pred, meas);
  }
  detail += fmt(" whole model %.3f", b["model"]["ratio"].get<double>());
  return {ok, "hidden 64:" + detail};
}

}  // namespace

// Exit status: 2 if a check could not run (exception), otherwise 0, or 1 on
// any FAIL when --strict is given. The PASS/FAIL lines are the result.
int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::string(argv[1]) == "--strict";
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
    bool needs_models;
  };
  const std::vector<Criterion> criteria = {
      {1, "truncation optimality", eckart_young, false},
      {2, "top-k projection optimality", l0_projection, false},
      {3, "gradient correctness", gradients, false},
      {4, "loss decomposition", decomposition, false},
      {5, "lossless plan is a no-op", lossless_noop, true},
      {6, "mid-layer ratio trend", mid_layer_trend, true},
      {7, "perplexity vs magnitude pruning", fidelity_ordering, true},
      {8, "activation stability trend", stability_trend, true},
      {9, "robustness curves", robustness, true},
      {10, "determinism", determinism, true},
      {11, "checkpoint robustness", checkpoint_robustness, true},
      {12, "latency cost model", latency_model, true},
  };
  int failed = 0;
  int errors = 0;
  bool prepared = false;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      if (c.needs_models && !prepared) {
        prepare_runs();
        prepared = true;
      }
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
      ++errors;
    }
    failed += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  if (errors > 0) return 2;
  return strict && failed > 0 ? 1 : 0;
}
