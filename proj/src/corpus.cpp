// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cce/error.hpp"
#include "cce/numeric.hpp"

namespace cce {
namespace {

constexpr double kSuccessorMass[] = {0.45, 0.25, 0.12, 0.08};
constexpr std::size_t kSuccessorCount = std::size(kSuccessorMass);

Token draw(const std::vector<double>& cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  return static_cast<Token>(std::min<std::size_t>(it - cumulative.begin(), cumulative.size() - 1));
}

}  // namespace

void VocabLayout::validate() const {
  if (class_count == 0 || indicators_per_class == 0) {
    throw ValidationError("vocabulary layout needs classes and indicator tokens");
  }
  if (vocab_size < class_count + 1 + class_count * indicators_per_class + kSuccessorCount) {
    throw ValidationError("vocabulary of " + std::to_string(vocab_size) +
                          " tokens is too small for the classification layout");
  }
}

MarkovSource::MarkovSource(std::uint64_t seed, const VocabLayout& layout) : layout_(layout) {
  layout_.validate();
  const std::size_t n = layout_.content_size();
  Rng rng(seed);
  double preferred = 0.0;
  for (double m : kSuccessorMass) preferred += m;
  const double background = (1.0 - preferred) / static_cast<double>(n);
  successors_.resize(n);
  cumulative_.resize(n);
  std::vector<Token> all(n);
  std::iota(all.begin(), all.end(), Token{0});
  for (std::size_t t = 0; t < n; ++t) {
    rng.shuffle(all);
    successors_[t].assign(all.begin(), all.begin() + kSuccessorCount);
    std::vector<double> mass(n, background);
    for (std::size_t k = 0; k < kSuccessorCount; ++k) mass[successors_[t][k]] += kSuccessorMass[k];
    cumulative_[t].resize(n);
    std::partial_sum(mass.begin(), mass.end(), cumulative_[t].begin());
  }
}

TokenSequence MarkovSource::sample(std::uint64_t seed, std::size_t length) const {
  Rng rng(seed);
  TokenSequence out;
  out.reserve(length);
  if (length == 0) return out;
  Token current = static_cast<Token>(rng.below(layout_.content_size()));
  out.push_back(current);
  while (out.size() < length) {
    current = draw(cumulative_[current], rng);
    out.push_back(current);
  }
  return out;
}

std::vector<TokenSequence> synthetic_corpus(std::uint64_t seed, std::size_t count,
                                            std::size_t length, const VocabLayout& layout,
                                            std::uint64_t stream) {
  const MarkovSource source(seed, layout);
  std::vector<TokenSequence> out;
  out.reserve(count);
  const std::uint64_t base = mix_seed(seed, 1000 + stream);
  for (std::size_t i = 0; i < count; ++i) out.push_back(source.sample(mix_seed(base, i), length));
  return out;
}

std::vector<LabeledExample> classification_task(std::uint64_t seed, std::size_t count,
                                                std::size_t content_length,
                                                const VocabLayout& layout, double signal) {
  layout.validate();
  if (!(signal >= 0.0 && signal <= 1.0)) {
    throw ValidationError("classification signal must lie in [0, 1]");
  }
  Rng rng(seed);
  std::vector<LabeledExample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t c = rng.below(layout.class_count);
    LabeledExample ex;
    ex.label = layout.class_token(c);
    ex.tokens.reserve(content_length + 1);
    for (std::size_t t = 0; t < content_length; ++t) {
      if (rng.uniform() < signal) {
        ex.tokens.push_back(
            static_cast<Token>(c * layout.indicators_per_class + rng.below(layout.indicators_per_class)));
      } else {
        ex.tokens.push_back(static_cast<Token>(rng.below(layout.content_size())));
      }
    }
    ex.tokens.push_back(layout.query_token());
    out.push_back(std::move(ex));
  }
  return out;
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "substitution" || name == "char_noise") return NoiseKind::Substitution;
  if (name == "swap" || name == "word_swap") return NoiseKind::AdjacentSwap;
  if (name == "shuffle" || name == "reorder") return NoiseKind::BlockShuffle;
  throw ValidationError("unknown noise kind '" + std::string(name) + "'");
}

std::string_view noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::Substitution: return "substitution";
    case NoiseKind::AdjacentSwap: return "swap";
    case NoiseKind::BlockShuffle: return "shuffle";
  }
  return "unknown";
}

Perturbation perturb_tokens(std::span<const Token> tokens, double level, NoiseKind kind,
                            std::uint64_t seed, std::size_t alphabet) {
  if (!(level >= 0.0 && level <= 1.0)) throw ValidationError("noise level must lie in [0, 1]");
  if (alphabet == 0) throw ValidationError("noise alphabet must be non-empty");
  const std::size_t length = tokens.size();
  Perturbation out;
  out.tokens.assign(tokens.begin(), tokens.end());
  const auto count = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(length),
                       std::ceil(level * static_cast<double>(length) - 1e-9)));
  if (count == 0) return out;

  if (kind == NoiseKind::BlockShuffle) {
    Rng rng(mix_seed(seed, 0xB10C));
    const std::size_t start = rng.below(length - count + 1);
    std::vector<Token> block(out.tokens.begin() + start, out.tokens.begin() + start + count);
    rng.shuffle(block);
    std::copy(block.begin(), block.end(), out.tokens.begin() + start);
    out.affected.resize(count);
    std::iota(out.affected.begin(), out.affected.end(), start);
    return out;
  }

  std::vector<std::size_t> order(length);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  out.affected.assign(order.begin(), order.begin() + count);
  std::sort(out.affected.begin(), out.affected.end());

  if (kind == NoiseKind::Substitution) {
    for (std::size_t pos : out.affected) {
      Rng value_rng(mix_seed(seed, pos + 1));
      out.tokens[pos] = static_cast<Token>(value_rng.below(alphabet));
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      out.tokens[out.affected[i]] = tokens[out.affected[(i + 1) % count]];
    }
  }
  return out;
}

}  // namespace cce
