// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace cce {

using Token = std::uint32_t;
using TokenSequence = std::vector<Token>;

/// Vocabulary partition: content tokens first, then one query marker, then
/// one token per class at the top of the range.
struct VocabLayout {
  std::size_t vocab_size = 256;
  std::size_t class_count = 4;
  std::size_t indicators_per_class = 16;

  std::size_t content_size() const { return vocab_size - class_count - 1; }
  Token query_token() const { return static_cast<Token>(content_size()); }
  Token class_token(std::size_t c) const { return static_cast<Token>(content_size() + 1 + c); }
  void validate() const;
};

/// First-order Markov source with a planted bigram structure: each content
/// token has a handful of preferred successors carrying most of the mass.
class MarkovSource {
 public:
  MarkovSource(std::uint64_t seed, const VocabLayout& layout);

  TokenSequence sample(std::uint64_t seed, std::size_t length) const;

  /// Preferred successors of content token `t`, most likely first.
  const std::vector<Token>& successors(Token t) const { return successors_.at(t); }

 private:
  VocabLayout layout_;
  std::vector<std::vector<Token>> successors_;
  std::vector<std::vector<double>> cumulative_;
};

/// `count` sequences of `length` tokens from the Markov source seeded with
/// `seed`; `stream` selects an independent draw from the same chain.
std::vector<TokenSequence> synthetic_corpus(std::uint64_t seed, std::size_t count,
                                            std::size_t length, const VocabLayout& layout,
                                            std::uint64_t stream = 0);

struct LabeledExample {
  TokenSequence tokens;  // content tokens followed by the query marker
  Token label;           // the class token to predict after the query
};

/// Sequence classification: each content position is drawn from the class's
/// indicator set with probability `signal`, otherwise uniformly from all
/// content tokens. The model must emit the class token after the query.
std::vector<LabeledExample> classification_task(std::uint64_t seed, std::size_t count,
                                                std::size_t content_length,
                                                const VocabLayout& layout, double signal = 0.35);

enum class NoiseKind { Substitution, AdjacentSwap, BlockShuffle };

NoiseKind parse_noise_kind(std::string_view name);
std::string_view noise_kind_name(NoiseKind kind);

struct Perturbation {
  TokenSequence tokens;
  std::vector<std::size_t> affected;  // ascending positions touched

  bool operator==(const Perturbation&) const = default;
};

/// Perturbs exactly ceil(level * length) positions of `tokens`.
/// Substitution resamples each chosen position uniformly from the first
/// `alphabet` token ids; swap rotates the values of the chosen positions one
/// step along their sorted order; shuffle permutes one contiguous block.
/// For substitution and swap, the positions chosen at a lower level are a
/// prefix of those chosen at a higher level under the same seed, and a
/// substituted position's value depends only on (seed, position).
Perturbation perturb_tokens(std::span<const Token> tokens, double level, NoiseKind kind,
                            std::uint64_t seed, std::size_t alphabet);

}  // namespace cce
