// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cce/error.hpp"
#include "cce/numeric.hpp"

namespace cce {
namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); }

double gelu_grad(double x) {
  const double inner = kGeluC * (x + 0.044715 * x * x * x);
  const double t = std::tanh(inner);
  const double dinner = kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

Matrix linear(const Matrix& x, const Matrix& w) { return matmul(x, w.transpose()); }

void add_bias(Matrix& y, std::span<const double> bias) {
  for (std::size_t t = 0; t < y.rows(); ++t) {
    auto row = y.row(t);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
  }
}

void add_column_sums(const Matrix& dy, std::vector<double>& out) {
  for (std::size_t t = 0; t < dy.rows(); ++t) {
    const auto row = dy.row(t);
    for (std::size_t j = 0; j < row.size(); ++j) out[j] += row[j];
  }
}

void accumulate(Matrix& into, const Matrix& delta) {
  for (std::size_t i = 0; i < into.size(); ++i) into.data()[i] += delta.data()[i];
}

Matrix apply_weight(const ModelParameters& model, MatrixId id, const Matrix& x,
                    const FactoredWeights* factored) {
  if (factored != nullptr) {
    const auto it = factored->find(id);
    if (it != factored->end()) return apply_encoded(it->second, x);
  }
  return linear(x, model.weight(id));
}

struct NormOutput {
  Matrix out, xhat;
  std::vector<double> rstd;
};

NormOutput layer_norm(const Matrix& x, std::span<const double> gain, std::span<const double> bias) {
  NormOutput r{Matrix(x.rows(), x.cols()), Matrix(x.rows(), x.cols()),
               std::vector<double>(x.rows())};
  const double n = static_cast<double>(x.cols());
  for (std::size_t t = 0; t < x.rows(); ++t) {
    const auto row = x.row(t);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= n;
    const double rstd = 1.0 / std::sqrt(var + kLayerNormEps);
    r.rstd[t] = rstd;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double xh = (row[j] - mean) * rstd;
      r.xhat(t, j) = xh;
      r.out(t, j) = xh * gain[j] + bias[j];
    }
  }
  return r;
}

// Returns dx; accumulates gain/bias gradients.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, std::span<const double> rstd,
                           std::span<const double> gain, std::vector<double>& dgain,
                           std::vector<double>& dbias) {
  Matrix dx(dy.rows(), dy.cols());
  const double n = static_cast<double>(dy.cols());
  std::vector<double> dxhat(dy.cols());
  for (std::size_t t = 0; t < dy.rows(); ++t) {
    double mean_d = 0.0;
    double mean_dx = 0.0;
    for (std::size_t j = 0; j < dy.cols(); ++j) {
      const double g = dy(t, j);
      dgain[j] += g * xhat(t, j);
      dbias[j] += g;
      dxhat[j] = g * gain[j];
      mean_d += dxhat[j];
      mean_dx += dxhat[j] * xhat(t, j);
    }
    mean_d /= n;
    mean_dx /= n;
    for (std::size_t j = 0; j < dy.cols(); ++j) {
      dx(t, j) = rstd[t] * (dxhat[j] - mean_d - xhat(t, j) * mean_dx);
    }
  }
  return dx;
}

void check_tokens(const ModelConfig& config, std::span<const Token> tokens) {
  if (tokens.empty()) throw ValidationError("forward: empty token sequence");
  if (tokens.size() > config.max_seq) {
    throw ValidationError("forward: sequence length " + std::to_string(tokens.size()) +
                          " exceeds max_sequence_length " + std::to_string(config.max_seq));
  }
  for (Token t : tokens) {
    if (t >= config.vocab) {
      throw ValidationError("forward: token " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(config.vocab));
    }
  }
}

// Causal multi-head attention. Fills `context` and per-head probabilities.
void attend(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t heads, Matrix& context,
            std::vector<Matrix>& probs) {
  const std::size_t T = q.rows();
  const std::size_t dh = q.cols() / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  context = Matrix(T, q.cols());
  probs.assign(heads, Matrix(T, T));
  std::vector<double> scores(T);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t o = h * dh;
    Matrix& p = probs[h];
    for (std::size_t t = 0; t < T; ++t) {
      double best = -INFINITY;
      for (std::size_t s = 0; s <= t; ++s) {
        double dot = 0.0;
        for (std::size_t j = 0; j < dh; ++j) dot += q(t, o + j) * k(s, o + j);
        scores[s] = dot * scale;
        best = std::max(best, scores[s]);
      }
      double total = 0.0;
      for (std::size_t s = 0; s <= t; ++s) {
        scores[s] = std::exp(scores[s] - best);
        total += scores[s];
      }
      for (std::size_t s = 0; s <= t; ++s) {
        const double pr = scores[s] / total;
        p(t, s) = pr;
        for (std::size_t j = 0; j < dh; ++j) context(t, o + j) += pr * v(s, o + j);
      }
    }
  }
}

struct ForwardCapture {
  ForwardTape* tape = nullptr;
  ForwardResult* result = nullptr;
  bool activations = false;
  bool attention = false;
};

Matrix run_forward(const ModelParameters& model, std::span<const Token> tokens,
                   const FactoredWeights* factored, ForwardCapture capture) {
  const ModelConfig& cfg = model.config;
  check_tokens(cfg, tokens);
  const std::size_t T = tokens.size();
  Matrix x(T, cfg.hidden);
  for (std::size_t t = 0; t < T; ++t) {
    const auto emb = model.token_embedding.row(tokens[t]);
    const auto pos = model.position_embedding.row(t);
    for (std::size_t j = 0; j < cfg.hidden; ++j) x(t, j) = emb[j] + pos[j];
  }
  if (capture.tape) {
    capture.tape->tokens.assign(tokens.begin(), tokens.end());
    capture.tape->blocks.resize(cfg.layers);
  }
  for (std::size_t b = 0; b < cfg.layers; ++b) {
    const Block& blk = model.blocks[b];
    NormOutput n1 = layer_norm(x, blk.ln1_gain, blk.ln1_bias);
    Matrix q = apply_weight(model, {b, MatrixKind::Query}, n1.out, factored);
    Matrix k = apply_weight(model, {b, MatrixKind::Key}, n1.out, factored);
    Matrix v = apply_weight(model, {b, MatrixKind::Value}, n1.out, factored);
    Matrix context;
    std::vector<Matrix> probs;
    attend(q, k, v, cfg.heads, context, probs);
    Matrix mid = x + apply_weight(model, {b, MatrixKind::Output}, context, factored);
    NormOutput n2 = layer_norm(mid, blk.ln2_gain, blk.ln2_bias);
    Matrix pre = apply_weight(model, {b, MatrixKind::FeedForwardIn}, n2.out, factored);
    add_bias(pre, blk.b1);
    Matrix act = pre;
    for (double& a : act.values()) a = gelu(a);
    Matrix ffn_out = apply_weight(model, {b, MatrixKind::FeedForwardOut}, act, factored);
    add_bias(ffn_out, blk.b2);
    Matrix out = mid + ffn_out;

    if (capture.result) {
      if (capture.activations) capture.result->activations.push_back(act);
      if (capture.attention) capture.result->attention.push_back(probs);
    }
    if (capture.tape) {
      auto& bt = capture.tape->blocks[b];
      bt.input = std::move(x);
      bt.xhat1 = std::move(n1.xhat);
      bt.norm1 = std::move(n1.out);
      bt.rstd1 = std::move(n1.rstd);
      bt.q = std::move(q);
      bt.k = std::move(k);
      bt.v = std::move(v);
      bt.context = std::move(context);
      bt.probs = std::move(probs);
      bt.mid = std::move(mid);
      bt.xhat2 = std::move(n2.xhat);
      bt.norm2 = std::move(n2.out);
      bt.rstd2 = std::move(n2.rstd);
      bt.pre = std::move(pre);
      bt.act = std::move(act);
    }
    x = std::move(out);
  }
  NormOutput nf = layer_norm(x, model.final_gain, model.final_bias);
  Matrix logits = linear(nf.out, model.output);
  add_bias(logits, model.output_bias);
  if (capture.tape) {
    capture.tape->final_input = std::move(x);
    capture.tape->final_xhat = std::move(nf.xhat);
    capture.tape->final_norm = std::move(nf.out);
    capture.tape->final_rstd = std::move(nf.rstd);
    capture.tape->logits = logits;
  }
  return logits;
}

double population_std(std::span<const double> values, double mean) {
  CompensatedSum acc;
  for (double v : values) acc.add((v - mean) * (v - mean));
  return std::sqrt(acc.value() / static_cast<double>(values.size()));
}

double mean_of(std::span<const double> values) {
  return compensated_sum(values) / static_cast<double>(values.size());
}

}  // namespace

void ModelConfig::validate() const {
  if (layers < 2) throw ValidationError("model needs at least 2 layers");
  if (hidden == 0 || heads == 0 || ffn == 0 || vocab == 0 || max_seq == 0) {
    throw ValidationError("model dimensions must be positive");
  }
  if (hidden % heads != 0) {
    throw ValidationError("hidden dimension " + std::to_string(hidden) +
                          " is not divisible by head count " + std::to_string(heads));
  }
}

std::string_view matrix_kind_name(MatrixKind kind) {
  switch (kind) {
    case MatrixKind::Query: return "wq";
    case MatrixKind::Key: return "wk";
    case MatrixKind::Value: return "wv";
    case MatrixKind::Output: return "wo";
    case MatrixKind::FeedForwardIn: return "w1";
    case MatrixKind::FeedForwardOut: return "w2";
  }
  return "unknown";
}

std::string MatrixId::name() const {
  return "block" + std::to_string(block) + "." + std::string(matrix_kind_name(kind));
}

ModelParameters ModelParameters::zeros(const ModelConfig& config) {
  config.validate();
  ModelParameters m;
  m.config = config;
  const std::size_t H = config.hidden;
  const std::size_t F = config.ffn;
  m.token_embedding = Matrix(config.vocab, H);
  m.position_embedding = Matrix(config.max_seq, H);
  m.blocks.resize(config.layers);
  for (Block& b : m.blocks) {
    b.wq = b.wk = b.wv = b.wo = Matrix(H, H);
    b.w1 = Matrix(F, H);
    b.w2 = Matrix(H, F);
    b.b1.assign(F, 0.0);
    b.b2.assign(H, 0.0);
    b.ln1_gain.assign(H, 0.0);
    b.ln1_bias.assign(H, 0.0);
    b.ln2_gain.assign(H, 0.0);
    b.ln2_bias.assign(H, 0.0);
  }
  m.final_gain.assign(H, 0.0);
  m.final_bias.assign(H, 0.0);
  m.output = Matrix(config.vocab, H);
  m.output_bias.assign(config.vocab, 0.0);
  return m;
}

ModelParameters ModelParameters::zero_weights(const ModelConfig& config) {
  ModelParameters m = zeros(config);
  for (Block& b : m.blocks) {
    std::fill(b.ln1_gain.begin(), b.ln1_gain.end(), 1.0);
    std::fill(b.ln2_gain.begin(), b.ln2_gain.end(), 1.0);
  }
  std::fill(m.final_gain.begin(), m.final_gain.end(), 1.0);
  return m;
}

ModelParameters ModelParameters::random(const ModelConfig& config, std::uint64_t seed,
                                        double scale) {
  ModelParameters m = zero_weights(config);
  Rng rng(seed);
  auto fill = [&](Matrix& w, double s) {
    for (double& v : w.values()) v = s * rng.normal();
  };
  fill(m.token_embedding, scale);
  fill(m.position_embedding, scale);
  const double residual_scale = scale / std::sqrt(2.0 * static_cast<double>(config.layers));
  for (Block& b : m.blocks) {
    fill(b.wq, scale);
    fill(b.wk, scale);
    fill(b.wv, scale);
    fill(b.wo, residual_scale);
    fill(b.w1, scale);
    fill(b.w2, residual_scale);
  }
  fill(m.output, scale);
  return m;
}

Matrix& ModelParameters::weight(MatrixId id) {
  return const_cast<Matrix&>(std::as_const(*this).weight(id));
}

const Matrix& ModelParameters::weight(MatrixId id) const {
  const Block& b = blocks.at(id.block);
  switch (id.kind) {
    case MatrixKind::Query: return b.wq;
    case MatrixKind::Key: return b.wk;
    case MatrixKind::Value: return b.wv;
    case MatrixKind::Output: return b.wo;
    case MatrixKind::FeedForwardIn: return b.w1;
    case MatrixKind::FeedForwardOut: return b.w2;
  }
  throw ValidationError("unknown matrix kind");
}

std::vector<MatrixId> ModelParameters::compressible() const {
  std::vector<MatrixId> ids;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (MatrixKind k : kMatrixKinds) ids.push_back({b, k});
  }
  return ids;
}

std::vector<std::span<double>> ModelParameters::tensors() {
  std::vector<std::span<double>> out;
  out.push_back(token_embedding.values());
  out.push_back(position_embedding.values());
  for (Block& b : blocks) {
    for (Matrix* w : {&b.wq, &b.wk, &b.wv, &b.wo, &b.w1, &b.w2}) out.push_back(w->values());
    for (auto* v : {&b.b1, &b.b2, &b.ln1_gain, &b.ln1_bias, &b.ln2_gain, &b.ln2_bias}) {
      out.push_back(*v);
    }
  }
  out.push_back(final_gain);
  out.push_back(final_bias);
  out.push_back(output.values());
  out.push_back(output_bias);
  return out;
}

std::vector<std::span<const double>> ModelParameters::tensors() const {
  auto mutable_views = const_cast<ModelParameters&>(*this).tensors();
  return {mutable_views.begin(), mutable_views.end()};
}

std::size_t ModelParameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

void ModelParameters::validate() const {
  config.validate();
  const std::size_t H = config.hidden;
  auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const char* what) {
    if (m.rows() != r || m.cols() != c) {
      throw ShapeError(std::string(what) + " has shape " + m.shape_string() + ", expected " +
                       std::to_string(r) + "x" + std::to_string(c));
    }
  };
  auto expect_len = [](const std::vector<double>& v, std::size_t n, const char* what) {
    if (v.size() != n) throw ShapeError(std::string(what) + " has wrong length");
  };
  expect(token_embedding, config.vocab, H, "token embedding");
  expect(position_embedding, config.max_seq, H, "position embedding");
  if (blocks.size() != config.layers) throw ShapeError("block count disagrees with config");
  for (const Block& b : blocks) {
    expect(b.wq, H, H, "wq");
    expect(b.wk, H, H, "wk");
    expect(b.wv, H, H, "wv");
    expect(b.wo, H, H, "wo");
    expect(b.w1, config.ffn, H, "w1");
    expect(b.w2, H, config.ffn, "w2");
    expect_len(b.b1, config.ffn, "b1");
    expect_len(b.b2, H, "b2");
    expect_len(b.ln1_gain, H, "ln1 gain");
    expect_len(b.ln1_bias, H, "ln1 bias");
    expect_len(b.ln2_gain, H, "ln2 gain");
    expect_len(b.ln2_bias, H, "ln2 bias");
  }
  expect_len(final_gain, H, "final gain");
  expect_len(final_bias, H, "final bias");
  expect(output, config.vocab, H, "output");
  expect_len(output_bias, config.vocab, "output bias");
  for (const auto& t : tensors()) {
    for (double v : t) {
      if (!std::isfinite(v)) throw NumericalError("model contains a non-finite parameter");
    }
  }
}

ForwardResult forward(const ModelParameters& model, std::span<const Token> tokens,
                      const ForwardOptions& options) {
  ForwardResult result;
  ForwardCapture capture;
  capture.result = &result;
  capture.activations = options.capture_activations;
  capture.attention = options.capture_attention;
  result.logits = run_forward(model, tokens, options.factored, capture);
  return result;
}

ForwardTape forward_tape(const ModelParameters& model, std::span<const Token> tokens) {
  ForwardTape tape;
  ForwardCapture capture;
  capture.tape = &tape;
  run_forward(model, tokens, nullptr, capture);
  return tape;
}

void backward(const ModelParameters& model, const ForwardTape& tape, const Matrix& dlogits,
              ModelParameters& grad) {
  const ModelConfig& cfg = model.config;
  const std::size_t T = tape.tokens.size();
  const std::size_t dh = cfg.hidden / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  accumulate(grad.output, matmul_transpose_a(dlogits, tape.final_norm));
  add_column_sums(dlogits, grad.output_bias);
  Matrix dnorm = matmul(dlogits, model.output);
  Matrix dx = layer_norm_backward(dnorm, tape.final_xhat, tape.final_rstd, model.final_gain,
                                  grad.final_gain, grad.final_bias);

  for (std::size_t bi = cfg.layers; bi-- > 0;) {
    const Block& blk = model.blocks[bi];
    Block& g = grad.blocks[bi];
    const auto& bt = tape.blocks[bi];

    // Feed-forward branch: out = mid + W2 gelu(W1 norm2 + b1) + b2.
    accumulate(g.w2, matmul_transpose_a(dx, bt.act));
    add_column_sums(dx, g.b2);
    Matrix dact = matmul(dx, blk.w2);
    for (std::size_t i = 0; i < dact.size(); ++i) dact.data()[i] *= gelu_grad(bt.pre.data()[i]);
    accumulate(g.w1, matmul_transpose_a(dact, bt.norm2));
    add_column_sums(dact, g.b1);
    Matrix dnorm2 = matmul(dact, blk.w1);
    Matrix dmid = dx + layer_norm_backward(dnorm2, bt.xhat2, bt.rstd2, blk.ln2_gain, g.ln2_gain,
                                           g.ln2_bias);

    // Attention branch: mid = input + Wo context.
    accumulate(g.wo, matmul_transpose_a(dmid, bt.context));
    Matrix dctx = matmul(dmid, blk.wo);
    Matrix dq(T, cfg.hidden);
    Matrix dk(T, cfg.hidden);
    Matrix dv(T, cfg.hidden);
    std::vector<double> dp(T);
    for (std::size_t h = 0; h < cfg.heads; ++h) {
      const std::size_t o = h * dh;
      const Matrix& p = bt.probs[h];
      for (std::size_t t = 0; t < T; ++t) {
        double weighted = 0.0;
        for (std::size_t s = 0; s <= t; ++s) {
          double d = 0.0;
          for (std::size_t j = 0; j < dh; ++j) d += dctx(t, o + j) * bt.v(s, o + j);
          dp[s] = d;
          weighted += p(t, s) * d;
          for (std::size_t j = 0; j < dh; ++j) dv(s, o + j) += p(t, s) * dctx(t, o + j);
        }
        for (std::size_t s = 0; s <= t; ++s) {
          const double ds = p(t, s) * (dp[s] - weighted) * scale;
          if (ds == 0.0) continue;
          for (std::size_t j = 0; j < dh; ++j) {
            dq(t, o + j) += ds * bt.k(s, o + j);
            dk(s, o + j) += ds * bt.q(t, o + j);
          }
        }
      }
    }
    accumulate(g.wq, matmul_transpose_a(dq, bt.norm1));
    accumulate(g.wk, matmul_transpose_a(dk, bt.norm1));
    accumulate(g.wv, matmul_transpose_a(dv, bt.norm1));
    Matrix dnorm1 = matmul(dq, blk.wq);
    accumulate(dnorm1, matmul(dk, blk.wk));
    accumulate(dnorm1, matmul(dv, blk.wv));
    dx = dmid + layer_norm_backward(dnorm1, bt.xhat1, bt.rstd1, blk.ln1_gain, g.ln1_gain,
                                    g.ln1_bias);
  }

  for (std::size_t t = 0; t < T; ++t) {
    auto emb = grad.token_embedding.row(tape.tokens[t]);
    auto pos = grad.position_embedding.row(t);
    for (std::size_t j = 0; j < cfg.hidden; ++j) {
      emb[j] += dx(t, j);
      pos[j] += dx(t, j);
    }
  }
}

double next_token_nll(const Matrix& logits, std::span<const Token> tokens, Matrix* dlogits,
                      std::span<const double> weights) {
  const std::size_t T = tokens.size();
  if (logits.rows() != T) throw ShapeError("next_token_nll: logits rows != token count");
  if (!weights.empty() && weights.size() + 1 != T) {
    throw ShapeError("next_token_nll: weights must cover T-1 positions");
  }
  if (dlogits) *dlogits = Matrix(logits.rows(), logits.cols());
  CompensatedSum total;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    const double w = weights.empty() ? 1.0 : weights[t];
    const auto row = logits.row(t);
    const double best = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - best);
    const double lse = best + std::log(z);
    const Token target = tokens[t + 1];
    total.add(w * (lse - row[target]));
    if (dlogits) {
      auto drow = dlogits->row(t);
      for (std::size_t j = 0; j < row.size(); ++j) drow[j] = w * std::exp(row[j] - lse);
      drow[target] -= w;
    }
  }
  return total.value();
}

double perplexity(const ModelParameters& model, std::span<const TokenSequence> corpus,
                  std::size_t threads) {
  if (corpus.empty()) throw ValidationError("perplexity: empty corpus");
  std::vector<double> nll(corpus.size());
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    nll[i] = next_token_nll(forward(model, corpus[i]).logits, corpus[i], nullptr);
  });
  CompensatedSum total;
  std::size_t count = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    total.add(nll[i]);
    count += corpus[i].size() - 1;
  }
  if (count == 0) throw ValidationError("perplexity: corpus has no next-token targets");
  return std::exp(total.value() / static_cast<double>(count));
}

ActivationStats activation_stats(const ModelParameters& model,
                                 std::span<const TokenSequence> probe, std::size_t threads) {
  if (probe.empty()) throw ValidationError("activation_stats: empty probe set");
  std::vector<std::vector<Matrix>> captured(probe.size());
  ForwardOptions options;
  options.capture_activations = true;
  parallel_for(probe.size(), threads, [&](std::size_t i) {
    captured[i] = forward(model, probe[i], options).activations;
  });
  ActivationStats stats;
  for (std::size_t b = 0; b < model.config.layers; ++b) {
    std::vector<double> values;
    for (const auto& per_probe : captured) {
      const auto v = per_probe[b].values();
      values.insert(values.end(), v.begin(), v.end());
    }
    const double mean = mean_of(values);
    stats.mean.push_back(mean);
    stats.stddev.push_back(population_std(values, mean));
  }
  return stats;
}

AttentionStats attention_stats(const ModelParameters& model, std::span<const TokenSequence> probe,
                               std::size_t threads) {
  if (probe.empty()) throw ValidationError("attention_stats: empty probe set");
  const std::size_t layers = model.config.layers;
  // per probe, per block: std of all causal attention probabilities
  std::vector<std::vector<double>> spread(probe.size(), std::vector<double>(layers));
  ForwardOptions options;
  options.capture_attention = true;
  parallel_for(probe.size(), threads, [&](std::size_t i) {
    const auto result = forward(model, probe[i], options);
    for (std::size_t b = 0; b < layers; ++b) {
      std::vector<double> values;
      for (const Matrix& p : result.attention[b]) {
        for (std::size_t t = 0; t < p.rows(); ++t) {
          double row_sum = 0.0;
          for (std::size_t s = 0; s <= t; ++s) {
            values.push_back(p(t, s));
            row_sum += p(t, s);
          }
          if (std::abs(row_sum - 1.0) > 1e-6) {
            throw NumericalError("attention row does not sum to one in block " +
                                 std::to_string(b));
          }
        }
      }
      spread[i][b] = population_std(values, mean_of(values));
    }
  });
  AttentionStats stats;
  for (std::size_t b = 0; b < layers; ++b) {
    std::vector<double> per_probe(probe.size());
    for (std::size_t i = 0; i < probe.size(); ++i) per_probe[i] = spread[i][b];
    const double mean = mean_of(per_probe);
    stats.variability.push_back(mean);
    stats.dispersion.push_back(population_std(per_probe, mean));
  }
  return stats;
}

double classification_accuracy(const ModelParameters& model,
                               std::span<const LabeledExample> examples, const VocabLayout& layout,
                               std::size_t threads) {
  if (examples.empty()) throw ValidationError("classification_accuracy: no examples");
  std::vector<int> correct(examples.size(), 0);
  parallel_for(examples.size(), threads, [&](std::size_t i) {
    const Matrix logits = forward(model, examples[i].tokens).logits;
    const auto last = logits.row(logits.rows() - 1);
    Token best = layout.class_token(0);
    for (std::size_t c = 1; c < layout.class_count; ++c) {
      const Token tok = layout.class_token(c);
      if (last[tok] > last[best]) best = tok;
    }
    correct[i] = best == examples[i].label ? 1 : 0;
  });
  std::size_t hits = 0;
  for (int c : correct) hits += static_cast<std::size_t>(c);
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

VocabLayout layout_for(const ModelConfig& config) {
  VocabLayout layout;
  layout.vocab_size = config.vocab;
  layout.validate();
  return layout;
}

TrainingResult train_toy(const ModelConfig& config, const TrainingConfig& training) {
  config.validate();
  if (training.steps == 0 || training.batch == 0) {
    throw ValidationError("training needs at least one step and a non-empty batch");
  }
  if (training.sequence_length < 3 || training.sequence_length > config.max_seq) {
    throw ValidationError("training sequence length must lie in [3, max_seq]");
  }
  const VocabLayout layout = layout_for(config);
  const MarkovSource source(training.corpus_seed, layout);

  TrainingResult result;
  result.model = ModelParameters::random(config, training.seed, training.init_scale);
  ModelParameters& model = result.model;
  ModelParameters first_moment = ModelParameters::zeros(config);
  ModelParameters second_moment = ModelParameters::zeros(config);
  auto params = model.tensors();
  auto m1 = first_moment.tensors();
  auto m2 = second_moment.tensors();

  const auto class_count = static_cast<std::size_t>(
      std::round(training.class_fraction * static_cast<double>(training.batch)));
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kAdamEps = 1e-8;

  for (std::size_t step = 0; step < training.steps; ++step) {
    const std::uint64_t step_seed = mix_seed(training.seed, 7919 + step);
    std::vector<TokenSequence> batch;
    batch.reserve(training.batch);
    const auto examples = classification_task(mix_seed(step_seed, 1), class_count,
                                              training.sequence_length - 2, layout);
    for (const auto& ex : examples) {
      TokenSequence seq = ex.tokens;
      seq.push_back(ex.label);
      batch.push_back(std::move(seq));
    }
    for (std::size_t i = batch.size(); i < training.batch; ++i) {
      batch.push_back(source.sample(mix_seed(step_seed, 100 + i), training.sequence_length));
    }

    std::vector<ModelParameters> grads(batch.size());
    std::vector<double> losses(batch.size());
    parallel_for(batch.size(), training.threads, [&](std::size_t i) {
      grads[i] = ModelParameters::zeros(config);
      const ForwardTape tape = forward_tape(model, batch[i]);
      Matrix dlogits;
      losses[i] = next_token_nll(tape.logits, batch[i], &dlogits);
      backward(model, tape, dlogits, grads[i]);
    });
    double token_count = 0.0;
    for (const auto& seq : batch) token_count += static_cast<double>(seq.size() - 1);
    CompensatedSum loss;
    for (double l : losses) loss.add(l);
    result.loss_trace.push_back(loss.value() / token_count);
    if (!std::isfinite(result.loss_trace.back())) {
      throw NumericalError("training loss became non-finite at step " + std::to_string(step));
    }

    const double progress = static_cast<double>(step) / static_cast<double>(training.steps);
    const double lr = training.learning_rate * (1.0 - 0.9 * progress);
    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    std::vector<std::vector<std::span<const double>>> grad_views;
    grad_views.reserve(grads.size());
    for (const auto& g : grads) grad_views.push_back(g.tensors());
    for (std::size_t ti = 0; ti < params.size(); ++ti) {
      for (std::size_t j = 0; j < params[ti].size(); ++j) {
        double g = 0.0;
        for (const auto& gv : grad_views) g += gv[ti][j];
        g /= token_count;
        m1[ti][j] = kBeta1 * m1[ti][j] + (1.0 - kBeta1) * g;
        m2[ti][j] = kBeta2 * m2[ti][j] + (1.0 - kBeta2) * g * g;
        params[ti][j] -= lr * (m1[ti][j] / c1) / (std::sqrt(m2[ti][j] / c2) + kAdamEps);
      }
    }
  }

  const auto held_out = synthetic_corpus(training.corpus_seed, training.eval_sequences,
                                         training.sequence_length, layout, /*stream=*/2);
  result.final_perplexity = perplexity(model, held_out, training.threads);
  const double target = 0.8 * static_cast<double>(config.vocab);
  if (!(result.final_perplexity < target)) {
    throw NumericalError("training stopped at perplexity " +
                         std::to_string(result.final_perplexity) + ", target below " +
                         std::to_string(target));
  }
  return result;
}

}  // namespace cce
