// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/encoded.hpp"
#include "cce/matrix.hpp"

namespace cce {

struct ModelConfig {
  std::size_t layers = 6;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t ffn = 256;
  std::size_t vocab = 256;
  std::size_t max_seq = 64;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// The weight matrices of a block that the compression pipeline acts on.
enum class MatrixKind : std::uint8_t { Query, Key, Value, Output, FeedForwardIn, FeedForwardOut };

inline constexpr std::array<MatrixKind, 6> kMatrixKinds = {
    MatrixKind::Query,  MatrixKind::Key,           MatrixKind::Value,
    MatrixKind::Output, MatrixKind::FeedForwardIn, MatrixKind::FeedForwardOut};

std::string_view matrix_kind_name(MatrixKind kind);

struct MatrixId {
  std::size_t block = 0;
  MatrixKind kind = MatrixKind::Query;

  auto operator<=>(const MatrixId&) const = default;
  /// "block<index>.<kind>", zero-based block index.
  std::string name() const;
};

/// Pre-norm decoder block. Weights map inputs to outputs as y = W x, so
/// rows index output units.
struct Block {
  Matrix wq, wk, wv, wo;  // hidden x hidden
  Matrix w1;              // ffn x hidden
  Matrix w2;              // hidden x ffn
  std::vector<double> b1, b2;
  std::vector<double> ln1_gain, ln1_bias, ln2_gain, ln2_bias;

  bool operator==(const Block&) const = default;
};

struct ModelParameters {
  ModelConfig config;
  Matrix token_embedding;     // vocab x hidden
  Matrix position_embedding;  // max_seq x hidden
  std::vector<Block> blocks;
  std::vector<double> final_gain, final_bias;
  Matrix output;  // vocab x hidden
  std::vector<double> output_bias;

  /// Every tensor zero, layer-norm gains included (gradient accumulators).
  static ModelParameters zeros(const ModelConfig& config);
  /// Zero weights and biases with unit layer-norm gains.
  static ModelParameters zero_weights(const ModelConfig& config);
  /// Gaussian weights with standard deviation `scale`; biases zero, gains one.
  static ModelParameters random(const ModelConfig& config, std::uint64_t seed, double scale);

  Matrix& weight(MatrixId id);
  const Matrix& weight(MatrixId id) const;
  /// All compressible matrices in (block, kind) order.
  std::vector<MatrixId> compressible() const;

  /// Every tensor as a flat span, in a fixed order shared by all instances
  /// with the same config.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::size_t parameter_count() const;

  void validate() const;
  bool operator==(const ModelParameters&) const = default;
};

/// Encoded matrices executed through their factors instead of the dense
/// weight stored in ModelParameters.
using FactoredWeights = std::map<MatrixId, EncodedLayer>;

struct ForwardOptions {
  bool capture_activations = false;
  bool capture_attention = false;
  const FactoredWeights* factored = nullptr;
};

struct ForwardResult {
  Matrix logits;                                // T x vocab
  std::vector<Matrix> activations;              // per block: T x ffn, post-nonlinearity
  std::vector<std::vector<Matrix>> attention;   // per block, per head: T x T causal
};

ForwardResult forward(const ModelParameters& model, std::span<const Token> tokens,
                      const ForwardOptions& options = {});

/// Cached intermediates of one forward pass, consumed by backward().
struct ForwardTape {
  struct BlockTape {
    Matrix input, xhat1, norm1, q, k, v, context, mid, xhat2, norm2, pre, act;
    std::vector<double> rstd1, rstd2;
    std::vector<Matrix> probs;
  };
  std::vector<Token> tokens;
  std::vector<BlockTape> blocks;
  Matrix final_input, final_xhat, final_norm;
  std::vector<double> final_rstd;
  Matrix logits;
};

ForwardTape forward_tape(const ModelParameters& model, std::span<const Token> tokens);

/// Accumulates d(loss)/d(parameters) into `grad` given d(loss)/d(logits).
void backward(const ModelParameters& model, const ForwardTape& tape, const Matrix& dlogits,
              ModelParameters& grad);

/// Summed next-token negative log-likelihood and its gradient w.r.t. logits.
/// Position t predicts tokens[t + 1]; `weights` (optional, length T-1)
/// scales each position's term.
double next_token_nll(const Matrix& logits, std::span<const Token> tokens, Matrix* dlogits,
                      std::span<const double> weights = {});

double perplexity(const ModelParameters& model, std::span<const TokenSequence> corpus,
                  std::size_t threads = 1);

struct ActivationStats {
  std::vector<double> mean;  // per block
  std::vector<double> stddev;
};

struct AttentionStats {
  std::vector<double> variability;  // per block: mean over probes of attention std
  std::vector<double> dispersion;   // per block: std over probes of that quantity
};

ActivationStats activation_stats(const ModelParameters& model,
                                 std::span<const TokenSequence> probe, std::size_t threads = 1);
AttentionStats attention_stats(const ModelParameters& model, std::span<const TokenSequence> probe,
                               std::size_t threads = 1);

/// Fraction of examples whose highest-scoring class token (ties to the lower
/// id) after the query position equals the label.
double classification_accuracy(const ModelParameters& model,
                               std::span<const LabeledExample> examples, const VocabLayout& layout,
                               std::size_t threads = 1);

struct TrainingConfig {
  std::uint64_t seed = 1;
  std::uint64_t corpus_seed = 7;  // Markov chain structure, shared with evaluation
  std::size_t steps = 400;
  std::size_t batch = 16;
  std::size_t sequence_length = 24;
  double learning_rate = 3e-3;
  double init_scale = 0.02;
  double class_fraction = 0.5;  // share of each batch drawn from the classification task
  std::size_t eval_sequences = 64;
  std::size_t threads = 1;
};

struct TrainingResult {
  ModelParameters model;
  double final_perplexity = 0.0;
  std::vector<double> loss_trace;  // mean per-token NLL per step
};

/// Adam on the next-token objective over a mix of Markov-corpus sequences and
/// classification sequences (query followed by the class token). Fails with
/// NumericalError when held-out perplexity is not below 0.8 x vocab after
/// the configured steps.
TrainingResult train_toy(const ModelConfig& config, const TrainingConfig& training);

VocabLayout layout_for(const ModelConfig& config);

}  // namespace cce
