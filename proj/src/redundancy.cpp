// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/redundancy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cce/error.hpp"
#include "cce/numeric.hpp"

namespace cce {

TransformBank::TransformBank(std::vector<Matrix> transforms, std::uint64_t seed)
    : transforms_(std::move(transforms)), seed_(seed) {
  if (transforms_.empty()) throw ValidationError("transform bank needs at least one transform");
  const std::size_t p = transforms_.front().rows();
  const std::size_t n = transforms_.front().cols();
  if (p == 0 || n == 0) throw ValidationError("transform bank projections must be non-empty");
  for (const Matrix& f : transforms_) {
    if (f.rows() != p || f.cols() != n) {
      throw ShapeError("transform bank projections disagree: " + f.shape_string() + " vs " +
                       transforms_.front().shape_string());
    }
    for (std::size_t r = 0; r < p; ++r) {
      double norm_sq = 0.0;
      for (double v : f.row(r)) norm_sq += v * v;
      if (std::abs(std::sqrt(norm_sq) - 1.0) > 1e-9) {
        throw ValidationError("transform bank rows must have unit norm");
      }
    }
  }
}

TransformBank TransformBank::random(std::uint64_t seed, std::size_t count, std::size_t latent_dim,
                                    std::size_t input_dim) {
  if (count == 0 || latent_dim == 0 || input_dim == 0) {
    throw ValidationError("transform bank dimensions must be positive");
  }
  Rng rng(seed);
  std::vector<Matrix> transforms;
  transforms.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    Matrix f(latent_dim, input_dim);
    for (std::size_t r = 0; r < latent_dim; ++r) {
      double norm_sq = 0.0;
      for (double& v : f.row(r)) {
        v = rng.normal();
        norm_sq += v * v;
      }
      const double inv = 1.0 / std::sqrt(norm_sq);
      for (double& v : f.row(r)) v *= inv;
    }
    transforms.push_back(std::move(f));
  }
  return TransformBank(std::move(transforms), seed);
}

std::vector<double> TransformBank::apply(std::size_t k, const Matrix& w) const {
  if (w.size() != input_dim()) {
    throw ShapeError("transform bank expects flattened length " + std::to_string(input_dim()) +
                     ", got " + w.shape_string());
  }
  const Matrix& f = transforms_.at(k);
  std::vector<double> out(f.rows());
  const auto flat = w.values();
  for (std::size_t r = 0; r < f.rows(); ++r) {
    const auto row = f.row(r);
    double s = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) s += row[i] * flat[i];
    out[r] = s;
  }
  return out;
}

std::vector<double> TransformBank::represent(const Matrix& w) const {
  std::vector<double> mean(latent_dim(), 0.0);
  for (std::size_t k = 0; k < count(); ++k) {
    const auto projected = apply(k, w);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += projected[i];
  }
  for (double& v : mean) v /= static_cast<double>(count());
  return mean;
}

double contextual_similarity(const Matrix& wi, const Matrix& wj, const TransformBank& bank) {
  if (wi.rows() != wj.rows() || wi.cols() != wj.cols()) {
    throw ShapeError("contextual_similarity: shapes " + wi.shape_string() + " and " +
                     wj.shape_string() + " differ");
  }
  std::vector<double> terms(bank.count());
  for (std::size_t k = 0; k < bank.count(); ++k) {
    const auto a = bank.apply(k, wi);
    const auto b = bank.apply(k, wj);
    CompensatedSum dist;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = a[i] - b[i];
      dist.add(d * d);
    }
    terms[k] = dist.value();
  }
  return order_independent_sum(std::move(terms)) / static_cast<double>(bank.count());
}

Matrix similarity_matrix(std::span<const Matrix> layers, const TransformBank& bank,
                         std::size_t threads) {
  const std::size_t n = layers.size();
  Matrix out(n, n);
  parallel_for(n, threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j) {
      out(i, j) = i == j ? 0.0 : contextual_similarity(layers[i], layers[j], bank);
    }
  });
  return out;
}

CovarianceSummary layer_covariance(std::span<const std::vector<double>> samples,
                                   double epsilon_scale) {
  if (samples.empty()) throw ValidationError("layer_covariance needs at least one sample");
  const std::size_t dim = samples.front().size();
  if (dim == 0) throw ValidationError("layer_covariance samples are empty vectors");
  for (const auto& s : samples) {
    if (s.size() != dim) {
      throw ShapeError("layer_covariance samples have lengths " + std::to_string(dim) + " and " +
                       std::to_string(s.size()) + "; project heterogeneous layers first");
    }
  }
  const double count = static_cast<double>(samples.size());
  CovarianceSummary out;
  out.mean_representation.assign(dim, 0.0);
  for (std::size_t d = 0; d < dim; ++d) {
    CompensatedSum acc;
    for (const auto& s : samples) acc.add(s[d]);
    out.mean_representation[d] = acc.value() / count;
  }
  out.covariance = Matrix(dim, dim);
  for (std::size_t a = 0; a < dim; ++a) {
    for (std::size_t b = a; b < dim; ++b) {
      CompensatedSum acc;
      for (const auto& s : samples) {
        acc.add((s[a] - out.mean_representation[a]) * (s[b] - out.mean_representation[b]));
      }
      out.covariance(a, b) = acc.value() / count;
      out.covariance(b, a) = out.covariance(a, b);
    }
  }
  out.eigen = sym_eig(out.covariance);
  const double lambda_max = std::max(0.0, out.eigen.eigenvalues.front());
  out.epsilon = std::max(epsilon_scale * lambda_max, std::numeric_limits<double>::min());
  return out;
}

CovarianceSummary layer_covariance(std::span<const Matrix> layers, const TransformBank& bank,
                                   double epsilon_scale) {
  if (layers.empty()) throw ValidationError("layer_covariance needs at least one layer");
  std::vector<std::vector<double>> samples;
  samples.reserve(layers.size());
  for (const Matrix& w : layers) samples.push_back(bank.represent(w));
  return layer_covariance(samples, epsilon_scale);
}

std::vector<std::size_t> redundant_subspace(const CovarianceSummary& summary) {
  const auto& lambda = summary.eigen.eigenvalues;
  std::vector<std::size_t> picked;
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    if (lambda[k] < summary.epsilon) picked.push_back(k);
  }
  std::stable_sort(picked.begin(), picked.end(),
                   [&](std::size_t a, std::size_t b) { return lambda[a] < lambda[b]; });
  return picked;
}

ThresholdPolicy ThresholdPolicy::energy(double budget) {
  ThresholdPolicy p;
  p.mode = Mode::EnergyBudget;
  p.energy_budget = budget;
  p.validate();
  return p;
}

ThresholdPolicy ThresholdPolicy::fixed(double tau) {
  ThresholdPolicy p;
  p.mode = Mode::Fixed;
  p.fixed_tau = tau;
  p.validate();
  return p;
}

void ThresholdPolicy::validate() const {
  if (mode == Mode::EnergyBudget) {
    if (!(energy_budget > 0.0 && energy_budget <= 1.0)) {
      throw ValidationError("energy budget must lie in (0, 1]");
    }
  } else {
    if (!fixed_tau || !(*fixed_tau >= 0.0) || !std::isfinite(*fixed_tau)) {
      throw ValidationError("fixed threshold mode needs a finite tau >= 0");
    }
  }
}

double dynamic_threshold(std::span<const double> sigma, const ThresholdPolicy& policy) {
  if (sigma.empty()) throw ValidationError("dynamic_threshold: empty singular value sequence");
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] >= 0.0) || (i > 0 && sigma[i] > sigma[i - 1])) {
      throw ValidationError("dynamic_threshold: singular values must be non-negative and "
                            "non-increasing");
    }
  }
  policy.validate();
  if (policy.mode == ThresholdPolicy::Mode::Fixed) return *policy.fixed_tau;
  if (policy.energy_budget >= 1.0) return 0.0;

  CompensatedSum total_acc;
  for (double s : sigma) total_acc.add(s * s);
  const double total = total_acc.value();
  if (total == 0.0) return 0.0;
  const double target = policy.energy_budget * total;
  CompensatedSum kept;
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    kept.add(sigma[i] * sigma[i]);
    if (kept.value() >= target) return sigma[i];
  }
  return sigma.back();
}

std::size_t retained_count(std::span<const double> sigma, double tau) {
  return static_cast<std::size_t>(
      std::count_if(sigma.begin(), sigma.end(), [tau](double s) { return s >= tau; }));
}

}  // namespace cce
