// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <string>

#include "cce/error.hpp"
#include "cce/linalg.hpp"
#include "cce/numeric.hpp"

namespace cce {
namespace {

// One achievable (storage, squared Frobenius error) point of a matrix.
struct CurvePoint {
  std::size_t cost = 0;
  double error = 0.0;
  std::size_t rank = 0;
  std::size_t k = 0;
  bool dense = false;
};

struct LayerCurve {
  std::vector<CurvePoint> frontier;  // cost ascending, error strictly descending
  std::size_t floor_index = 0;       // first admissible frontier point
  std::size_t energy_rank = 0;
  double tau = 0.0;
  std::vector<double> kept_gain;  // squared magnitudes, descending: gain of each extra residual entry
};

ThresholdPolicy layer_policy(const ThresholdPolicy& policy, bool end_layer, double end_energy) {
  if (!end_layer || policy.mode != ThresholdPolicy::Mode::EnergyBudget) return policy;
  return ThresholdPolicy::energy(std::max(policy.energy_budget, end_energy));
}

// Entry indices by decreasing magnitude, ties to the earlier row-major entry.
std::vector<std::size_t> magnitude_order(const Matrix& w) {
  std::vector<std::size_t> order(w.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const double* v = w.data();
  std::stable_sort(order.begin(), order.end(),
                   [v](std::size_t a, std::size_t b) { return std::abs(v[a]) > std::abs(v[b]); });
  return order;
}

// Storage/error points of encode_layer's scheme: keep the k largest entries,
// fit rank r to what is left. Error = |tail|^2 - sum of the r largest
// squared singular values of the tail, evaluated on a grid of k.
LayerCurve build_curve(const PlanInput& in, const ThresholdPolicy& policy,
                       const PlanOptions& options) {
  const Matrix& w = *in.weight;
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  const std::size_t count = m * n;

  LayerCurve curve;
  const ThresholdPolicy lp = layer_policy(policy, in.end_layer, options.end_layer_energy);
  const auto spectrum = singular_values(w, in.id.name());
  curve.tau = dynamic_threshold(spectrum, lp);
  curve.energy_rank = std::max<std::size_t>(1, retained_count(spectrum, curve.tau));

  const auto order = magnitude_order(w);
  curve.kept_gain.resize(count);
  for (std::size_t i = 0; i < count; ++i) curve.kept_gain[i] = w.data()[order[i]] * w.data()[order[i]];
  std::vector<double> tail(count + 1);
  tail[count] = 0.0;
  for (std::size_t i = count; i-- > 0;) tail[i] = tail[i + 1] + curve.kept_gain[i];
  const double total = tail[0];

  const std::size_t step = m + n;
  std::size_t rank_cap = 0;
  while ((rank_cap + 1) * step + m < count) ++rank_cap;
  const std::size_t max_rank = std::min(curve.energy_rank, rank_cap);

  std::vector<CurvePoint> points;
  if (options.order == EncodingOrder::ResidualFirst) {
    const std::size_t spacing = std::max<std::size_t>(1, count / options.residual_grid);
    Matrix rest = w;
    std::size_t removed = 0;
    for (std::size_t k = 0; max_rank > 0 && step + m + k < count; k += spacing) {
      for (; removed < k; ++removed) rest.data()[order[removed]] = 0.0;
      const auto sigma = singular_values(rest, in.id.name());
      double err = tail[k];
      for (std::size_t r = 1; r <= max_rank && r * step + m + k < count; ++r) {
        err = std::max(0.0, err - sigma[r - 1] * sigma[r - 1]);
        points.push_back({r * step + m + k, err, r, k, false});
      }
    }
  } else {
    // Exact for every k: peel one rank at a time, sort the remainder.
    const SvdResult s = svd(w, in.id.name());
    Matrix rest = w;
    std::vector<double> sq(count);
    std::vector<double> rest_tail(count + 1);
    for (std::size_t r = 1; r <= max_rank; ++r) {
      const double sigma = s.singular_values[r - 1];
      for (std::size_t i = 0; i < m; ++i) {
        const double ui = sigma * s.u(i, r - 1);
        auto row = rest.row(i);
        for (std::size_t j = 0; j < n; ++j) row[j] -= ui * s.v(j, r - 1);
      }
      for (std::size_t i = 0; i < count; ++i) sq[i] = rest.data()[i] * rest.data()[i];
      std::sort(sq.begin(), sq.end(), std::greater<>());
      rest_tail[count] = 0.0;
      for (std::size_t i = count; i-- > 0;) rest_tail[i] = rest_tail[i + 1] + sq[i];
      for (std::size_t k = 0; r * step + m + k < count; ++k) {
        points.push_back({r * step + m + k, rest_tail[k], r, k, false});
      }
    }
  }
  points.push_back({count, 0.0, std::min(m, n), count, true});
  std::stable_sort(points.begin(), points.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.cost != b.cost ? a.cost < b.cost : a.error < b.error;
  });
  for (const CurvePoint& p : points) {
    if (curve.frontier.empty() || p.error < curve.frontier.back().error) curve.frontier.push_back(p);
  }
  if (in.end_layer) {
    const double allowed = (1.0 - options.end_layer_energy) * total;
    while (curve.frontier[curve.floor_index].error > allowed) ++curve.floor_index;
  }
  return curve;
}

std::size_t choose(const LayerCurve& c, double lambda) {
  std::size_t best = c.floor_index;
  double best_value = c.frontier[best].error + lambda * static_cast<double>(c.frontier[best].cost);
  for (std::size_t i = best + 1; i < c.frontier.size(); ++i) {
    const double v = c.frontier[i].error + lambda * static_cast<double>(c.frontier[i].cost);
    if (v < best_value) {
      best = i;
      best_value = v;
    }
  }
  return best;
}

std::size_t spend(const std::vector<LayerCurve>& curves, const std::vector<std::size_t>& pick) {
  std::size_t total = 0;
  for (std::size_t i = 0; i < curves.size(); ++i) total += curves[i].frontier[pick[i]].cost;
  return total;
}

std::vector<std::size_t> pick_all(const std::vector<LayerCurve>& curves, double lambda) {
  std::vector<std::size_t> pick(curves.size());
  for (std::size_t i = 0; i < curves.size(); ++i) pick[i] = choose(curves[i], lambda);
  return pick;
}

double row_dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::string_view encoding_order_name(EncodingOrder order) {
  switch (order) {
    case EncodingOrder::ResidualFirst: return "residual_first";
    case EncodingOrder::FactorsFirst: return "factors_first";
  }
  return "unknown";
}

EncodingOrder parse_encoding_order(std::string_view name) {
  if (name == "residual_first") return EncodingOrder::ResidualFirst;
  if (name == "factors_first") return EncodingOrder::FactorsFirst;
  throw ValidationError("unknown encoding order '" + std::string(name) + "'");
}

Matrix truncated_approximation(const Matrix& w, std::size_t r) {
  const std::size_t limit = std::min(w.rows(), w.cols());
  if (r < 1 || r > limit) {
    throw ValidationError("truncated_approximation: rank " + std::to_string(r) +
                          " outside [1, " + std::to_string(limit) + "]");
  }
  const SvdResult s = svd(w, "truncated_approximation");
  Matrix left(w.rows(), r);
  Matrix right(r, w.cols());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < r; ++j) left(i, j) = s.u(i, j) * s.singular_values[j];
  }
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t c = 0; c < w.cols(); ++c) right(j, c) = s.v(c, j);
  }
  return matmul(left, right);
}

Matrix sparsify_top_k(const Matrix& w, std::size_t k) {
  if (k > w.size()) {
    throw ValidationError("sparsify_top_k: k = " + std::to_string(k) + " exceeds " +
                          std::to_string(w.size()) + " entries");
  }
  const auto order = magnitude_order(w);
  const double* v = w.data();
  Matrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < k; ++i) out.data()[order[i]] = v[order[i]];
  return out;
}

double compression_ratio(std::size_t compressed_count, std::size_t original_count) {
  if (original_count == 0) throw ValidationError("compression_ratio: original count is zero");
  return static_cast<double>(compressed_count) / static_cast<double>(original_count);
}

std::size_t PlanEntry::planned_parameters() const {
  if (lossless) return rows * cols;
  return rank * (rows + cols) + sparsity_budget + rows;
}

void PlanEntry::validate() const {
  const std::string name = id.name();
  if (rank < 1 || rank > std::min(rows, cols)) {
    throw ValidationError("plan entry " + name + ": rank " + std::to_string(rank) +
                          " outside [1, min dims]");
  }
  if (sparsity_budget > rows * cols) {
    throw ValidationError("plan entry " + name + ": sparsity budget exceeds element count");
  }
}

std::size_t CompressionPlan::original_parameters() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.original_parameters();
  return n;
}

std::size_t CompressionPlan::planned_parameters() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.planned_parameters();
  return n;
}

const PlanEntry& CompressionPlan::entry(MatrixId id) const {
  for (const auto& e : entries) {
    if (e.id == id) return e;
  }
  throw ValidationError("plan has no entry for " + id.name());
}

void CompressionPlan::validate() const {
  if (schedule_steps < 1) throw ValidationError("plan needs at least one schedule step");
  if (!(global_budget > 0.0 && global_budget <= 1.0)) {
    throw ValidationError("plan global budget must lie in (0, 1]");
  }
  for (const auto& e : entries) e.validate();
}

CompressionPlan plan_layers(std::span<const PlanInput> inputs, double global_budget,
                            const ThresholdPolicy& policy, const PlanOptions& options) {
  if (!(global_budget > 0.0 && global_budget <= 1.0)) {
    throw ValidationError("global budget must lie in (0, 1], got " + std::to_string(global_budget));
  }
  if (options.schedule_steps < 1) throw ValidationError("schedule_steps must be at least 1");
  if (options.residual_grid < 1) throw ValidationError("residual_grid must be at least 1");
  if (!(options.end_layer_energy >= 0.0 && options.end_layer_energy <= 1.0)) {
    throw ValidationError("end_layer_energy must lie in [0, 1]");
  }
  policy.validate();
  if (inputs.empty()) throw ValidationError("nothing to plan");

  CompressionPlan plan;
  plan.global_budget = global_budget;
  plan.energy_budget = policy.energy_budget;
  plan.schedule_steps = options.schedule_steps;

  if (global_budget >= 1.0) {
    for (const auto& in : inputs) {
      const auto sigma = singular_values(*in.weight, in.id.name());
      const ThresholdPolicy lp = layer_policy(policy, in.end_layer, options.end_layer_energy);
      PlanEntry e;
      e.id = in.id;
      e.rows = in.weight->rows();
      e.cols = in.weight->cols();
      e.tau = dynamic_threshold(sigma, lp);
      e.energy_rank = std::max<std::size_t>(1, retained_count(sigma, e.tau));
      e.rank = std::min(e.rows, e.cols);
      e.sparsity_budget = e.rows * e.cols;
      e.lossless = true;
      plan.entries.push_back(e);
    }
    return plan;
  }

  std::size_t original = 0;
  for (const auto& in : inputs) {
    if (in.weight == nullptr) throw ValidationError("plan input " + in.id.name() + " has no weight");
    original += in.weight->size();
  }
  std::vector<LayerCurve> curves(inputs.size());
  parallel_for(inputs.size(), options.threads,
               [&](std::size_t i) { curves[i] = build_curve(inputs[i], policy, options); });
  const auto budget = static_cast<std::size_t>(
      std::floor(global_budget * static_cast<double>(original) + 1e-9));

  std::vector<std::size_t> floors(curves.size());
  for (std::size_t i = 0; i < curves.size(); ++i) floors[i] = curves[i].floor_index;
  const std::size_t floor_spend = spend(curves, floors);
  if (floor_spend > budget) {
    std::string binding;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].end_layer) continue;
      binding += (binding.empty() ? "" : ", ") + inputs[i].id.name() + " (" +
                 std::to_string(curves[i].frontier[floors[i]].cost) + ")";
    }
    throw PlanningError("budget of " + std::to_string(budget) + " parameters cannot hold the " +
                        std::to_string(floor_spend) + " required by floors; binding layers: " +
                        (binding.empty() ? "minimum ranks" : binding));
  }

  std::vector<std::size_t> pick = pick_all(curves, 0.0);
  if (spend(curves, pick) > budget) {
    double hi = 1.0;
    while (spend(curves, pick_all(curves, hi)) > budget) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 200 && hi - lo > 1e-18; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (spend(curves, pick_all(curves, mid)) > budget) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    pick = pick_all(curves, hi);
  }

  // Spend what is left on the best local improvements.
  std::size_t used = spend(curves, pick);
  while (true) {
    std::size_t target = curves.size();
    double best_rate = 0.0;
    for (std::size_t i = 0; i < curves.size(); ++i) {
      const auto& f = curves[i].frontier;
      if (pick[i] + 1 >= f.size()) continue;
      const std::size_t extra = f[pick[i] + 1].cost - f[pick[i]].cost;
      if (used + extra > budget) continue;
      const double rate = (f[pick[i]].error - f[pick[i] + 1].error) / static_cast<double>(extra);
      if (rate > best_rate) {
        best_rate = rate;
        target = i;
      }
    }
    if (target == curves.size()) break;
    used += curves[target].frontier[pick[target] + 1].cost - curves[target].frontier[pick[target]].cost;
    ++pick[target];
  }

  // Whatever the frontier steps leave unspent goes out one residual entry at
  // a time, largest weight magnitude first across matrices.
  std::vector<std::size_t> extra(curves.size(), 0);
  using Candidate = std::pair<double, std::size_t>;  // (gain, -index) ordering below
  auto better = [](const Candidate& a, const Candidate& b) {
    return a.first != b.first ? a.first < b.first : a.second > b.second;
  };
  std::priority_queue<Candidate, std::vector<Candidate>, decltype(better)> queue(better);
  auto offer = [&](std::size_t i) {
    const CurvePoint& p = curves[i].frontier[pick[i]];
    const std::size_t k = p.k + extra[i];
    if (p.dense || p.cost + extra[i] + 1 >= inputs[i].weight->size()) return;
    queue.push({curves[i].kept_gain[k], i});
  };
  for (std::size_t i = 0; i < curves.size(); ++i) offer(i);
  while (used < budget && !queue.empty()) {
    const std::size_t i = queue.top().second;
    queue.pop();
    ++extra[i];
    ++used;
    offer(i);
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const CurvePoint& p = curves[i].frontier[pick[i]];
    PlanEntry e;
    e.id = inputs[i].id;
    e.rows = inputs[i].weight->rows();
    e.cols = inputs[i].weight->cols();
    e.tau = curves[i].tau;
    e.energy_rank = curves[i].energy_rank;
    e.rank = p.rank;
    e.sparsity_budget = p.k + extra[i];
    e.lossless = p.dense;
    e.order = options.order;
    plan.entries.push_back(e);
  }
  return plan;
}

CompressionPlan plan_compression(const ModelParameters& model, double global_budget,
                                 const ThresholdPolicy& policy, const PlanOptions& options) {
  std::vector<PlanInput> inputs;
  const std::size_t last = model.config.layers - 1;
  for (MatrixId id : model.compressible()) {
    inputs.push_back({id, &model.weight(id), id.block == 0 || id.block == last});
  }
  return plan_layers(inputs, global_budget, policy, options);
}

EncodedLayer encode_layer(const Matrix& w, const PlanEntry& entry) {
  if (w.rows() != entry.rows || w.cols() != entry.cols) {
    throw ShapeError("encode_layer: weight " + w.shape_string() + " does not match plan entry " +
                     entry.id.name());
  }
  entry.validate();
  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  const std::size_t r = entry.rank;
  EncodedLayer enc;
  enc.left = Matrix(m, r);
  enc.right = Matrix(r, n);
  auto set_factors = [&](const SvdResult& s) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < r; ++j) enc.left(i, j) = s.u(i, j) * s.singular_values[j];
    }
    for (std::size_t j = 0; j < r; ++j) {
      for (std::size_t c = 0; c < n; ++c) enc.right(j, c) = s.v(c, j);
    }
  };
  Matrix kept;
  if (entry.order == EncodingOrder::ResidualFirst) {
    kept = sparsify_top_k(w, entry.sparsity_budget);
    set_factors(svd(w - kept, entry.id.name()));
  } else {
    set_factors(svd(w, entry.id.name()));
    kept = sparsify_top_k(w - matmul(enc.left, enc.right), entry.sparsity_budget);
  }
  Matrix approx = matmul(enc.left, enc.right);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double v = kept(i, j);
      if (v == 0.0) continue;
      enc.residual.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), v});
      approx(i, j) += v;
    }
  }

  // Row error (w - s a)^2 is a parabola in s with minimum at s* = <w,a>/|a|^2,
  // so any s between 1 and 2s* - 1 is no worse than s = 1.
  enc.rescale.assign(m, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    const auto wi = w.row(i);
    const auto ai = approx.row(i);
    const double aa = row_dot(ai, ai);
    if (aa == 0.0) continue;
    const double star = row_dot(wi, ai) / aa;
    const double mirror = 2.0 * star - 1.0;
    const double target = std::sqrt(row_dot(wi, wi) / aa);
    enc.rescale[i] = std::clamp(target, std::min(1.0, mirror), std::max(1.0, mirror));
  }
  return enc;
}

std::vector<double> block_ratios(std::span<const CompressionRecord> records, std::size_t layers) {
  std::vector<std::size_t> pre(layers, 0);
  std::vector<std::size_t> post(layers, 0);
  for (const auto& r : records) {
    if (r.id.block >= layers) throw ValidationError("record block index out of range");
    pre[r.id.block] += r.pre_params;
    post[r.id.block] += r.post_params;
  }
  std::vector<double> out(layers);
  for (std::size_t b = 0; b < layers; ++b) out[b] = compression_ratio(post[b], pre[b]);
  return out;
}

ModelParameters baseline_magnitude_prune(const ModelParameters& model, double budget) {
  if (!(budget > 0.0 && budget <= 1.0)) throw ValidationError("prune budget must lie in (0, 1]");
  ModelParameters out = model;
  if (budget >= 1.0) return out;
  for (MatrixId id : model.compressible()) {
    Matrix& w = out.weight(id);
    const auto k = static_cast<std::size_t>(std::floor(budget * static_cast<double>(w.size()) + 1e-9));
    w = sparsify_top_k(w, k);
  }
  return out;
}

std::size_t magnitude_prune_parameters(const ModelParameters& model, double budget) {
  std::size_t n = 0;
  for (MatrixId id : model.compressible()) {
    const double count = static_cast<double>(model.weight(id).size());
    n += budget >= 1.0 ? model.weight(id).size()
                       : static_cast<std::size_t>(std::floor(budget * count + 1e-9));
  }
  return n;
}

Matrix uniform_quantize(const Matrix& w, unsigned bits) {
  if (bits < 1 || bits > 32) throw ValidationError("quantization bits must lie in [1, 32]");
  if (w.empty()) return w;
  const auto [lo_it, hi_it] = std::minmax_element(w.values().begin(), w.values().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (hi == lo) return w;
  const double levels = std::ldexp(1.0, static_cast<int>(bits)) - 1.0;
  const double step = (hi - lo) / levels;
  Matrix out(w.rows(), w.cols());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double q = std::clamp(std::round((w.data()[i] - lo) / step), 0.0, levels);
    out.data()[i] = lo + q * step;
  }
  return out;
}

ModelParameters baseline_uniform_quantize(const ModelParameters& model, unsigned bits) {
  ModelParameters out = model;
  for (MatrixId id : model.compressible()) out.weight(id) = uniform_quantize(model.weight(id), bits);
  return out;
}

void plant_redundancy(ModelParameters& model, std::span<const std::size_t> blocks,
                      std::size_t rank, double noise, std::uint64_t seed) {
  if (rank == 0) throw ValidationError("planted rank must be positive");
  if (noise < 0.0) throw ValidationError("planted noise must be non-negative");
  for (std::size_t b : blocks) {
    if (b >= model.config.layers) throw ValidationError("planted block index out of range");
    for (MatrixKind kind : kMatrixKinds) {
      Matrix& w = model.weight({b, kind});
      Rng rng(mix_seed(seed, b * 16 + static_cast<std::size_t>(kind)));
      Matrix a(w.rows(), rank);
      Matrix c(rank, w.cols());
      for (double& v : a.values()) v = rng.normal();
      for (double& v : c.values()) v = rng.normal();
      Matrix planted = matmul(a, c);
      const double base = frobenius_norm(planted);
      const double sd = noise * base / std::sqrt(static_cast<double>(w.size()));
      for (double& v : planted.values()) v += sd * rng.normal();
      const double target = frobenius_norm(w);
      const double factor = target > 0.0 ? target / frobenius_norm(planted) : 1.0;
      w = factor * planted;
    }
  }
}

}  // namespace cce
