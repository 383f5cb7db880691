// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "doctest.h"

#include <cmath>

#include "cce/engine.hpp"
#include "cce/error.hpp"
#include "cce/linalg.hpp"
#include "cce/loss.hpp"
#include "test_support.hpp"

using namespace cce;
using cce::testing::oracle_singular_values;
using cce::testing::random_matrix;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 2;
  c.hidden = 8;
  c.heads = 2;
  c.ffn = 12;
  c.vocab = 11;
  c.max_seq = 8;
  return c;
}

ProbeSet tiny_probe(const ModelConfig& c, std::size_t count, std::size_t length, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TokenSequence> inputs;
  for (std::size_t i = 0; i < count; ++i) {
    TokenSequence t(length);
    for (Token& v : t) v = static_cast<Token>(rng.below(c.vocab));
    inputs.push_back(t);
  }
  return ProbeSet::uniform(std::move(inputs));
}

ModelParameters perturbed(const ModelParameters& m, double scale, std::uint64_t seed) {
  ModelParameters out = m;
  Rng rng(seed);
  for (MatrixId id : out.compressible()) {
    for (double& v : out.weight(id).values()) v += scale * rng.normal();
  }
  return out;
}

LossConfig fuzz_config(const ModelParameters& m, Rng& rng) {
  LossConfig c;
  c.alpha = rng.uniform();
  c.beta = rng.uniform();
  c.gamma = rng.uniform();
  const std::size_t n = m.compressible().size();
  for (std::size_t i = 0; i < n; ++i) {
    c.lambda.push_back(rng.uniform());
    c.rank_targets.push_back(3.0 * rng.uniform());
  }
  c.tau = 0.5 + rng.uniform();
  return c;
}

// Smallest gap between any singular value and tau, over all layers; FD is
// only meaningful away from the indicator's jump.
double tau_margin(const ModelParameters& m, double tau) {
  double gap = INFINITY;
  for (const Matrix& w : compressible_layers(m)) {
    for (double s : singular_values(w)) gap = std::min(gap, std::abs(s - tau));
  }
  return gap;
}

}  // namespace

TEST_CASE("probe set validation") {
  CHECK_THROWS_AS(ProbeSet{}.validate(), ValidationError);
  ProbeSet p = ProbeSet::uniform({{1, 2}, {3, 4}, {5}});
  CHECK_NOTHROW(p.validate());
  p.weights[0] += 1e-9;
  CHECK_THROWS_AS(p.validate(), ValidationError);
  p.weights = {1.0, 0.0, 0.0};
  CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("reconstruction loss examples") {
  ModelConfig c = tiny_config();
  c.vocab = 2;
  const auto m = ModelParameters::random(c, 3, 0.3);
  const ProbeSet probe = ProbeSet::uniform({{1}});
  CHECK(reconstruction_loss(m, m, probe) == 0.0);
  auto shifted = m;
  shifted.output_bias[0] += 1.0;
  shifted.output_bias[1] += 1.0;
  CHECK(reconstruction_loss(m, shifted, probe) == doctest::Approx(2.0).epsilon(1e-12));

  ModelConfig other = tiny_config();
  other.vocab = 3;
  CHECK_THROWS_AS(reconstruction_loss(m, ModelParameters::random(other, 3, 0.3), probe), ShapeError);
}

TEST_CASE("lossless encoding leaves the reconstruction loss at zero") {
  const ModelConfig c = tiny_config();
  const auto m = ModelParameters::random(c, 4, 0.3);
  auto decoded = m;
  for (MatrixId id : m.compressible()) {
    const Matrix& w = m.weight(id);
    const std::size_t r = std::min(w.rows(), w.cols());
    PlanEntry e{id, w.rows(), w.cols(), r, r, 0, 0.0, false};
    decoded.weight(id) = decode_layer(encode_layer(w, e));
  }
  CHECK(reconstruction_loss(m, decoded, tiny_probe(c, 4, 6, 1)) <= 1e-12);
}

TEST_CASE("reconstruction loss is invariant under probe permutation") {
  const ModelConfig c = tiny_config();
  const auto m = ModelParameters::random(c, 5, 0.3);
  const auto other = perturbed(m, 0.05, 6);
  ProbeSet p = tiny_probe(c, 9, 5, 2);
  Rng rng(3);
  std::vector<double> raw(9);
  for (double& w : raw) w = 0.1 + rng.uniform();
  const double total = [&] {
    double s = 0.0;
    for (double w : raw) s += w;
    return s;
  }();
  for (std::size_t i = 0; i < raw.size(); ++i) p.weights[i] = raw[i] / total;
  // Renormalize to within 1e-12.
  const double drift = compensated_sum(p.weights) - 1.0;
  p.weights[0] -= drift;
  const double base = reconstruction_loss(m, other, p);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::size_t> order(9);
    for (std::size_t i = 0; i < 9; ++i) order[i] = i;
    rng.shuffle(order);
    ProbeSet q;
    for (std::size_t i : order) {
      q.inputs.push_back(p.inputs[i]);
      q.weights.push_back(p.weights[i]);
    }
    CHECK(reconstruction_loss(m, other, q) == base);
  }
}

TEST_CASE("similarity loss examples") {
  const std::vector<Matrix> diag = {Matrix::diagonal(std::vector<double>{5.0, 0.1})};
  CHECK(similarity_loss(diag, 0.0) == 0.0);
  CHECK(similarity_loss(diag, 1.0) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK_THROWS_AS(similarity_loss(diag, -1.0), ValidationError);

  Rng rng(12);
  const std::vector<Matrix> layers = {random_matrix(4, 6, rng), random_matrix(5, 5, rng),
                                      random_matrix(7, 3, rng)};
  double expected = 0.0;
  for (const Matrix& w : layers) {
    for (double s : oracle_singular_values(w)) {
      if (s < 1.5) expected += s;
    }
  }
  CHECK(similarity_loss(layers, 1.5) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("regularization loss examples") {
  const std::vector<Matrix> diag = {Matrix::diagonal(std::vector<double>{2.0, 3.0})};
  const std::vector<double> one = {1.0};
  CHECK(regularization_loss(diag, one, std::vector<double>{5.0}) == doctest::Approx(0.0));
  CHECK(regularization_loss(diag, one, std::vector<double>{0.0}) == doctest::Approx(25.0));

  Rng rng(13);
  const std::vector<Matrix> layers = {random_matrix(4, 6, rng), random_matrix(5, 5, rng)};
  const std::vector<double> lambda = {0.5, 2.0};
  const std::vector<double> targets = {1.0, 4.0};
  double expected = 0.0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    double nuclear = 0.0;
    for (double s : oracle_singular_values(layers[i])) nuclear += s;
    expected += lambda[i] * (nuclear - targets[i]) * (nuclear - targets[i]);
  }
  CHECK(regularization_loss(layers, lambda, targets) == doctest::Approx(expected).epsilon(1e-10));
  CHECK_THROWS_AS(regularization_loss(layers, one, targets), ValidationError);
}

TEST_CASE("total loss decomposition") {
  const ModelConfig c = tiny_config();
  const auto m = ModelParameters::random(c, 7, 0.3);
  const ProbeSet probe = tiny_probe(c, 3, 6, 4);
  LossConfig zero;
  zero.alpha = 0.0;
  CHECK(total_loss(m, perturbed(m, 0.1, 1), probe, zero).total == 0.0);
  LossConfig rec_only;
  CHECK(total_loss(m, m, probe, rec_only).total == 0.0);

  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto other = perturbed(m, 0.1 * rng.uniform(), rng.next());
    const LossConfig config = fuzz_config(m, rng);
    const LossBreakdown b = total_loss(m, other, probe, config);
    CHECK(b.rec >= 0.0);
    CHECK(b.sim >= 0.0);
    CHECK(b.reg >= 0.0);
    CHECK(std::abs(b.total - (config.alpha * b.rec + config.beta * b.sim + config.gamma * b.reg)) <=
          1e-12);
    // Recombined from the standalone operations.
    const auto layers = compressible_layers(other);
    CHECK(b.rec == reconstruction_loss(m, other, probe));
    CHECK(b.sim == similarity_loss(layers, config.tau));
    CHECK(b.reg == regularization_loss(layers, config.lambda, config.rank_targets));
  }
  LossConfig bad;
  bad.beta = -1.0;
  CHECK_THROWS_AS(total_loss(m, m, probe, bad), ValidationError);
  bad = LossConfig{};
  bad.lambda = {1.0};
  CHECK_THROWS_AS(total_loss(m, m, probe, bad), ValidationError);
}

TEST_CASE("zero coefficients give a zero gradient") {
  const ModelConfig c = tiny_config();
  const auto m = ModelParameters::random(c, 7, 0.3);
  LossConfig zero;
  zero.alpha = 0.0;
  for (const Matrix& g : loss_gradient(m, perturbed(m, 0.1, 2), tiny_probe(c, 2, 5, 1), zero)) {
    CHECK(max_abs_diff(g, Matrix(g.rows(), g.cols())) == 0.0);
  }
}

TEST_CASE("regularizer gradient vanishes at its target") {
  ModelConfig c = tiny_config();
  c.hidden = 2;
  c.heads = 1;
  c.ffn = 2;
  auto m = ModelParameters::zero_weights(c);
  m.weight({0, MatrixKind::Query}) = Matrix::diagonal(std::vector<double>{2.0, 3.0});
  LossConfig config;
  config.alpha = 0.0;
  config.gamma = 1.0;
  config.lambda.assign(m.compressible().size(), 0.0);
  config.rank_targets.assign(m.compressible().size(), 0.0);
  config.lambda[0] = 1.0;
  config.rank_targets[0] = 5.0;
  const auto g = loss_gradient(m, m, ProbeSet::uniform({{1, 2}}), config);
  CHECK(max_abs_diff(g[0], Matrix(2, 2)) < 1e-14);
  config.rank_targets[0] = 0.0;
  // d/dW (|W|_* )^2 = 2 |W|_* U V^T = 10 I for a positive diagonal.
  CHECK(max_abs_diff(loss_gradient(m, m, ProbeSet::uniform({{1, 2}}), config)[0],
                     Matrix::diagonal(std::vector<double>{10.0, 10.0})) < 1e-12);
}

TEST_CASE("loss gradient matches central differences") {
  const ModelConfig c = tiny_config();
  Rng rng(2024);
  int checked = 0;
  for (int trial = 0; checked < 6; ++trial) {
    const auto m = ModelParameters::random(c, 100 + trial, 0.4);
    const auto other = perturbed(m, 0.05, 200 + trial);
    const LossConfig config = fuzz_config(m, rng);
    if (tau_margin(other, config.tau) < 1e-3) continue;
    const auto probe = tiny_probe(c, 3, 6, trial);
    const auto result = check_gradient(m, other, probe, config, 1e-5, 12, trial);
    CHECK(result.max_relative_error <= 1e-4);
    ++checked;
  }
}

TEST_CASE("gradient is linear in the coefficients") {
  const ModelConfig c = tiny_config();
  const auto m = ModelParameters::random(c, 31, 0.4);
  const auto other = perturbed(m, 0.05, 32);
  const auto probe = tiny_probe(c, 3, 6, 3);
  Rng rng(33);
  const LossConfig c1 = fuzz_config(m, rng);
  LossConfig c2 = c1;
  c2.alpha = rng.uniform();
  c2.beta = rng.uniform();
  c2.gamma = rng.uniform();
  const double a = 0.7;
  const double b = 1.9;
  LossConfig mix = c1;
  mix.alpha = a * c1.alpha + b * c2.alpha;
  mix.beta = a * c1.beta + b * c2.beta;
  mix.gamma = a * c1.gamma + b * c2.gamma;
  const auto g1 = loss_gradient(m, other, probe, c1);
  const auto g2 = loss_gradient(m, other, probe, c2);
  const auto gm = loss_gradient(m, other, probe, mix);
  for (std::size_t l = 0; l < gm.size(); ++l) {
    CHECK(max_abs_diff(gm[l], a * g1[l] + b * g2[l]) <= 1e-10);
  }
}

TEST_CASE("encoded gradient follows the chain rule") {
  Rng rng(41);
  const Matrix w = random_matrix(6, 5, rng);
  PlanEntry e{{0, MatrixKind::Query}, 6, 5, 2, 2, 4, 0.0, false};
  EncodedLayer enc = encode_layer(w, e);
  for (double& s : enc.rescale) s = 0.5 + rng.uniform();
  const Matrix g = random_matrix(6, 5, rng);
  // f(enc) = <g, decode(enc)>
  auto f = [&](const EncodedLayer& x) {
    const Matrix d = decode_layer(x);
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += g.data()[i] * d.data()[i];
    return s;
  };
  const EncodedLayer grad = encoded_gradient(enc, g);
  const double h = 1e-6;
  auto fd = [&](double& param) {
    const double saved = param;
    param = saved + h;
    const double up = f(enc);
    param = saved - h;
    const double down = f(enc);
    param = saved;
    return (up - down) / (2 * h);
  };
  for (std::size_t i = 0; i < enc.left.size(); ++i) {
    CHECK(grad.left.data()[i] == doctest::Approx(fd(enc.left.data()[i])).epsilon(1e-7));
  }
  for (std::size_t i = 0; i < enc.right.size(); ++i) {
    CHECK(grad.right.data()[i] == doctest::Approx(fd(enc.right.data()[i])).epsilon(1e-7));
  }
  for (std::size_t i = 0; i < enc.residual.size(); ++i) {
    CHECK(grad.residual[i].value == doctest::Approx(fd(enc.residual[i].value)).epsilon(1e-7));
  }
  for (std::size_t i = 0; i < enc.rescale.size(); ++i) {
    CHECK(grad.rescale[i] == doctest::Approx(fd(enc.rescale[i])).epsilon(1e-7));
  }
}

namespace {

struct EncodedModel {
  ModelParameters model;
  FactoredWeights encoded;
};

EncodedModel encode_all(const ModelParameters& m, std::size_t rank, std::size_t k) {
  EncodedModel out{m, {}};
  for (MatrixId id : m.compressible()) {
    const Matrix& w = m.weight(id);
    PlanEntry e{id, w.rows(), w.cols(), rank, std::min({rank, w.rows(), w.cols()}), k, 0.0, false};
    out.encoded[id] = encode_layer(w, e);
    out.model.weight(id) = decode_layer(out.encoded[id]);
  }
  return out;
}

}  // namespace

TEST_CASE("fine-tuning with zero steps or a lossless start changes nothing") {
  const ModelConfig c = tiny_config();
  const auto m = ModelParameters::random(c, 51, 0.4);
  const auto probe = tiny_probe(c, 3, 6, 5);
  const auto lossy = encode_all(m, 2, 3);
  const auto none = fine_tune(lossy.model, lossy.encoded, m, probe, LossConfig{}, 0, 0.1);
  CHECK(none.encoded == lossy.encoded);
  CHECK(none.model == lossy.model);
  CHECK(none.trajectory.size() == 1);

  const auto exact = encode_all(m, 8, 0);
  const auto tuned = fine_tune(exact.model, exact.encoded, m, probe, LossConfig{}, 5, 0.01);
  CHECK(tuned.trajectory.front().rec <= 1e-12);
  for (MatrixId id : m.compressible()) {
    CHECK(max_abs_diff(tuned.model.weight(id), m.weight(id)) <= 1e-10);
  }
  CHECK_THROWS_AS(fine_tune(exact.model, exact.encoded, m, probe, LossConfig{}, 1, 0.0),
                  ValidationError);
}

TEST_CASE("fine-tuning lowers the reconstruction loss within the plan") {
  const ModelConfig c = tiny_config();
  const auto m = ModelParameters::random(c, 61, 0.4);
  const auto probe = tiny_probe(c, 4, 7, 6);
  const auto lossy = encode_all(m, 2, 4);
  const auto tuned = fine_tune(lossy.model, lossy.encoded, m, probe, LossConfig{}, 50, 0.02);
  REQUIRE(tuned.trajectory.size() == 51);
  double envelope = tuned.trajectory.front().rec;
  bool improved = false;
  for (const auto& b : tuned.trajectory) {
    if (b.rec < envelope) improved = true;
    envelope = std::min(envelope, b.rec);
  }
  CHECK(improved);
  CHECK(tuned.trajectory[tuned.best_step].total <= tuned.trajectory.front().total);
  CHECK(tuned.trajectory[tuned.best_step].rec < 0.9 * tuned.trajectory.front().rec);
  for (const auto& [id, enc] : tuned.encoded) {
    const auto& before = lossy.encoded.at(id);
    CHECK(enc.rank() == before.rank());
    REQUIRE(enc.residual.size() == before.residual.size());
    for (std::size_t i = 0; i < enc.residual.size(); ++i) {
      CHECK(enc.residual[i].row == before.residual[i].row);
      CHECK(enc.residual[i].col == before.residual[i].col);
    }
    CHECK(max_abs_diff(decode_layer(enc), tuned.model.weight(id)) == 0.0);
  }
}
