// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cce/error.hpp"
#include "cce/linalg.hpp"
#include "cce/numeric.hpp"

namespace cce {
namespace {

// Per-probe gradients are reduced in groups of this size so memory stays
// bounded and the summation order does not depend on the thread count.
constexpr std::size_t kGradientGroup = 8;

// Position of a matrix in compressible() order.
std::size_t slot(MatrixId id) {
  return id.block * kMatrixKinds.size() + static_cast<std::size_t>(id.kind);
}

double coefficient(std::span<const double> values, std::size_t i) {
  return values.empty() ? 0.0 : values[i];
}

void check_outputs(std::span<const Matrix> original_outputs, const ProbeSet& probe) {
  if (original_outputs.size() != probe.inputs.size()) {
    throw ShapeError("reference outputs cover " + std::to_string(original_outputs.size()) +
                     " probes, probe set has " + std::to_string(probe.inputs.size()));
  }
}

void add_scaled(Matrix& into, double s, const Matrix& m) {
  for (std::size_t i = 0; i < into.size(); ++i) into.data()[i] += s * m.data()[i];
}

}  // namespace

void LossConfig::validate(std::size_t layer_count) const {
  for (double c : {alpha, beta, gamma, tau}) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw ValidationError("loss coefficients and tau must be finite and non-negative");
    }
  }
  for (const auto* v : {&lambda, &rank_targets}) {
    if (!v->empty() && v->size() != layer_count) {
      throw ValidationError("per-layer loss vectors must have " + std::to_string(layer_count) +
                            " entries, got " + std::to_string(v->size()));
    }
    for (double x : *v) {
      if (!(x >= 0.0) || !std::isfinite(x)) {
        throw ValidationError("per-layer loss entries must be finite and non-negative");
      }
    }
  }
}

ProbeSet ProbeSet::uniform(std::vector<TokenSequence> inputs) {
  ProbeSet p;
  p.weights.assign(inputs.size(), inputs.empty() ? 0.0 : 1.0 / static_cast<double>(inputs.size()));
  p.inputs = std::move(inputs);
  return p;
}

void ProbeSet::validate() const {
  if (inputs.empty()) throw ValidationError("probe set is empty");
  if (weights.size() != inputs.size()) throw ValidationError("probe weights do not match inputs");
  for (double w : weights) {
    if (!(w > 0.0)) throw ValidationError("probe weights must be positive");
  }
  const double total = compensated_sum(weights);
  if (std::abs(total - 1.0) > 1e-12) {
    throw ValidationError("probe weights sum to " + std::to_string(total) + ", expected 1");
  }
}

std::vector<Matrix> probe_outputs(const ModelParameters& model, const ProbeSet& probe,
                                  std::size_t threads) {
  probe.validate();
  std::vector<Matrix> out(probe.inputs.size());
  parallel_for(out.size(), threads,
               [&](std::size_t i) { out[i] = forward(model, probe.inputs[i]).logits; });
  return out;
}

double reconstruction_loss(const ModelParameters& original, const ModelParameters& compressed,
                           const ProbeSet& probe, std::size_t threads) {
  const auto ref = probe_outputs(original, probe, threads);
  return reconstruction_loss(ref, compressed, probe, threads);
}

double reconstruction_loss(std::span<const Matrix> original_outputs,
                           const ModelParameters& compressed, const ProbeSet& probe,
                           std::size_t threads) {
  probe.validate();
  check_outputs(original_outputs, probe);
  std::vector<double> terms(probe.inputs.size());
  parallel_for(terms.size(), threads, [&](std::size_t i) {
    const Matrix out = forward(compressed, probe.inputs[i]).logits;
    const Matrix& ref = original_outputs[i];
    if (out.rows() != ref.rows() || out.cols() != ref.cols()) {
      throw ShapeError("reconstruction_loss: output " + out.shape_string() + " vs reference " +
                       ref.shape_string());
    }
    CompensatedSum acc;
    for (std::size_t j = 0; j < out.size(); ++j) {
      const double d = out.data()[j] - ref.data()[j];
      acc.add(d * d);
    }
    terms[i] = probe.weights[i] * acc.value();
  });
  return order_independent_sum(std::move(terms));
}

double similarity_loss(std::span<const Matrix> layers, double tau) {
  if (!(tau >= 0.0)) throw ValidationError("similarity tau must be non-negative");
  CompensatedSum acc;
  for (const Matrix& w : layers) {
    for (double s : singular_values(w, "similarity_loss")) {
      if (s < tau) acc.add(s);
    }
  }
  return acc.value();
}

double regularization_loss(std::span<const Matrix> layers, std::span<const double> lambda,
                           std::span<const double> rank_targets) {
  if (lambda.size() != layers.size() || rank_targets.size() != layers.size()) {
    throw ValidationError("regularization_loss: lambda and rank targets must match layer count");
  }
  CompensatedSum acc;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (lambda[i] == 0.0) continue;
    const double gap = nuclear_norm(layers[i]) - rank_targets[i];
    acc.add(lambda[i] * gap * gap);
  }
  return acc.value();
}

std::vector<Matrix> compressible_layers(const ModelParameters& model) {
  std::vector<Matrix> out;
  for (MatrixId id : model.compressible()) out.push_back(model.weight(id));
  return out;
}

LossBreakdown total_loss(const ModelParameters& original, const ModelParameters& compressed,
                         const ProbeSet& probe, const LossConfig& config, std::size_t threads) {
  const auto ref = probe_outputs(original, probe, threads);
  return total_loss(ref, compressed, probe, config, threads);
}

LossBreakdown total_loss(std::span<const Matrix> original_outputs,
                         const ModelParameters& compressed, const ProbeSet& probe,
                         const LossConfig& config, std::size_t threads) {
  const auto layers = compressible_layers(compressed);
  config.validate(layers.size());
  LossBreakdown b;
  b.rec = reconstruction_loss(original_outputs, compressed, probe, threads);
  b.sim = similarity_loss(layers, config.tau);
  const std::vector<double> zeros(layers.size(), 0.0);
  b.reg = regularization_loss(layers, config.lambda.empty() ? zeros : config.lambda,
                              config.rank_targets.empty() ? zeros : config.rank_targets);
  b.total = config.alpha * b.rec + config.beta * b.sim + config.gamma * b.reg;
  return b;
}

std::vector<Matrix> loss_gradient(const ModelParameters& original,
                                  const ModelParameters& compressed, const ProbeSet& probe,
                                  const LossConfig& config, std::size_t threads) {
  const auto ref = probe_outputs(original, probe, threads);
  return loss_gradient(ref, compressed, probe, config, threads);
}

std::vector<Matrix> loss_gradient(std::span<const Matrix> original_outputs,
                                  const ModelParameters& compressed, const ProbeSet& probe,
                                  const LossConfig& config, std::size_t threads) {
  const auto ids = compressed.compressible();
  config.validate(ids.size());
  probe.validate();
  check_outputs(original_outputs, probe);
  std::vector<Matrix> grad;
  for (MatrixId id : ids) {
    const Matrix& w = compressed.weight(id);
    grad.emplace_back(w.rows(), w.cols());
  }

  if (config.alpha != 0.0) {
    const std::size_t n = probe.inputs.size();
    for (std::size_t start = 0; start < n; start += kGradientGroup) {
      const std::size_t count = std::min(kGradientGroup, n - start);
      std::vector<ModelParameters> partial(count);
      parallel_for(count, threads, [&](std::size_t j) {
        const std::size_t i = start + j;
        const ForwardTape tape = forward_tape(compressed, probe.inputs[i]);
        const Matrix& ref = original_outputs[i];
        if (tape.logits.rows() != ref.rows() || tape.logits.cols() != ref.cols()) {
          throw ShapeError("loss_gradient: output shape differs from reference");
        }
        Matrix dlogits(ref.rows(), ref.cols());
        const double scale = 2.0 * probe.weights[i];
        for (std::size_t e = 0; e < ref.size(); ++e) {
          dlogits.data()[e] = scale * (tape.logits.data()[e] - ref.data()[e]);
        }
        partial[j] = ModelParameters::zeros(compressed.config);
        backward(compressed, tape, dlogits, partial[j]);
      });
      for (std::size_t j = 0; j < count; ++j) {
        for (std::size_t l = 0; l < ids.size(); ++l) {
          add_scaled(grad[l], config.alpha, partial[j].weight(ids[l]));
        }
      }
    }
  }

  const bool need_sim = config.beta != 0.0;
  const bool need_reg = config.gamma != 0.0 && !config.lambda.empty();
  if (need_sim || need_reg) {
    parallel_for(ids.size(), threads, [&](std::size_t l) {
      const double lambda = coefficient(config.lambda, l);
      if (!need_sim && lambda == 0.0) return;
      const Matrix& w = compressed.weight(ids[l]);
      const SvdResult s = svd(w, ids[l].name());
      double nuclear = 0.0;
      for (double v : s.singular_values) nuclear += v;
      const double reg_scale =
          need_reg ? config.gamma * lambda * 2.0 * (nuclear - coefficient(config.rank_targets, l))
                   : 0.0;
      for (std::size_t j = 0; j < s.singular_values.size(); ++j) {
        const double sigma = s.singular_values[j];
        double c = 0.0;
        if (need_sim && sigma < config.tau) c += config.beta;
        if (sigma > 0.0) c += reg_scale;
        if (c == 0.0) continue;
        Matrix& g = grad[l];
        for (std::size_t r = 0; r < w.rows(); ++r) {
          const double ur = c * s.u(r, j);
          auto row = g.row(r);
          for (std::size_t q = 0; q < w.cols(); ++q) row[q] += ur * s.v(q, j);
        }
      }
    });
  }
  return grad;
}

GradientCheck check_gradient(const ModelParameters& original, const ModelParameters& compressed,
                             const ProbeSet& probe, const LossConfig& config, double step,
                             std::size_t samples, std::uint64_t seed) {
  const auto ref = probe_outputs(original, probe);
  const auto analytic = loss_gradient(ref, compressed, probe, config);
  const auto ids = compressed.compressible();
  ModelParameters work = compressed;
  Rng rng(seed);
  GradientCheck result;
  for (std::size_t l = 0; l < ids.size(); ++l) {
    Matrix& w = work.weight(ids[l]);
    std::vector<std::size_t> entries(w.size());
    for (std::size_t i = 0; i < entries.size(); ++i) entries[i] = i;
    if (samples != 0 && samples < entries.size()) {
      rng.shuffle(entries);
      entries.resize(samples);
      std::sort(entries.begin(), entries.end());
    }
    for (std::size_t e : entries) {
      const double saved = w.data()[e];
      w.data()[e] = saved + step;
      const double up = total_loss(ref, work, probe, config).total;
      w.data()[e] = saved - step;
      const double down = total_loss(ref, work, probe, config).total;
      w.data()[e] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[l].data()[e];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > result.max_relative_error) {
        result = {rel, l, e, a, numeric};
      }
    }
  }
  return result;
}

EncodedLayer encoded_gradient(const EncodedLayer& enc, const Matrix& g) {
  if (g.rows() != enc.rows() || g.cols() != enc.cols()) {
    throw ShapeError("encoded_gradient: gradient " + g.shape_string() + " does not match layer");
  }
  const std::size_t m = enc.rows();
  const std::size_t n = enc.cols();
  Matrix base = matmul(enc.left, enc.right);
  for (const auto& e : enc.residual) base(e.row, e.col) += e.value;
  Matrix scaled = g;
  EncodedLayer out;
  out.rescale.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double ds = 0.0;
    auto row = scaled.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      ds += g(i, j) * base(i, j);
      row[j] *= enc.rescale[i];
    }
    out.rescale[i] = ds;
  }
  out.left = matmul(scaled, enc.right.transpose());
  out.right = matmul_transpose_a(enc.left, scaled);
  out.residual = enc.residual;
  for (auto& e : out.residual) e.value = scaled(e.row, e.col);
  return out;
}

FineTuneResult fine_tune(const ModelParameters& compressed, const FactoredWeights& encoded,
                         const ModelParameters& original, const ProbeSet& probe,
                         const LossConfig& config, std::size_t steps, double step_size,
                         std::size_t threads) {
  if (!(step_size > 0.0) || !std::isfinite(step_size)) {
    throw ValidationError("fine_tune step size must be positive");
  }
  const auto ids = compressed.compressible();
  config.validate(ids.size());
  const auto ref = probe_outputs(original, probe, threads);

  FactoredWeights current = encoded;
  ModelParameters model = compressed;
  for (const auto& [id, enc] : current) model.weight(id) = decode_layer(enc);

  FineTuneResult result;
  result.encoded = current;
  result.model = model;
  double best = INFINITY;
  double rate = step_size;
  for (std::size_t step = 0;; ++step) {
    const LossBreakdown b = total_loss(ref, model, probe, config, threads);
    if (!std::isfinite(b.total)) {
      throw DivergenceError("fine-tuning loss became non-finite at step " + std::to_string(step));
    }
    result.trajectory.push_back(b);
    if (b.total < best) {
      best = b.total;
      result.best_step = step;
      result.encoded = current;
      result.model = model;
    } else {
      // Overshot: resume from the best point with half the step.
      current = result.encoded;
      model = result.model;
      rate *= 0.5;
    }
    if (step == steps || current.empty()) break;

    const auto grad = loss_gradient(ref, model, probe, config, threads);
    for (auto& [id, enc] : current) {
      const EncodedLayer g = encoded_gradient(enc, grad[slot(id)]);
      add_scaled(enc.left, -rate, g.left);
      add_scaled(enc.right, -rate, g.right);
      for (std::size_t i = 0; i < enc.residual.size(); ++i) {
        enc.residual[i].value -= rate * g.residual[i].value;
      }
      for (std::size_t i = 0; i < enc.rescale.size(); ++i) enc.rescale[i] -= rate * g.rescale[i];
      model.weight(id) = decode_layer(enc);
    }
  }
  return result;
}

}  // namespace cce
