// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "cce/checkpoint.hpp"
#include "cce/config.hpp"

namespace cce {

inline constexpr std::string_view kToolVersion = "1.0.0";

using Json = nlohmann::ordered_json;

enum class Baseline { None, Magnitude, Quantize };

std::string_view baseline_name(Baseline baseline);
/// "magnitude", "quantize" or "none"; anything else throws ValidationError.
Baseline parse_baseline(std::string_view name);

struct RunOptions {
  std::uint64_t seed = 1;
  std::size_t threads = 1;  // never changes results
  Baseline baseline = Baseline::Magnitude;
};

/// Data sets every command derives from the config and seed.
struct EvaluationData {
  std::vector<TokenSequence> held_out;        // perplexity, activation and attention stats
  ProbeSet probe;                             // reconstruction loss
  std::vector<LabeledExample> examples;      // clean classification examples
};

EvaluationData evaluation_data(const PipelineConfig& config, std::uint64_t seed);

/// Accuracy at each configured noise level. Example i is perturbed with
/// seed mix_seed(noise_seed, i); the query marker is never touched.
std::vector<double> robustness_curve(const ModelParameters& model,
                                     std::span<const LabeledExample> examples,
                                     const EvaluationConfig& evaluation, const VocabLayout& layout,
                                     std::size_t threads = 1);

/// Perplexity, accuracy, robustness curve and activation/attention stats.
Json model_metrics(const ModelParameters& model, const EvaluationData& data,
                   const PipelineConfig& config, std::size_t threads = 1);

Json config_json(const PipelineConfig& config);

struct TrainOutput {
  Checkpoint checkpoint;
  Json report;
};

/// Trains the toy model with seed options.seed.
TrainOutput cmd_train(const PipelineConfig& config, const RunOptions& options);

/// Similarity matrix across blocks and covariance spectrum per matrix kind,
/// plus singular values of every compressible matrix.
Json cmd_analyze(const Checkpoint& checkpoint, const PipelineConfig& config,
                 const RunOptions& options);

struct CompressOutput {
  Checkpoint checkpoint;
  Json report;
};

/// Redundancy assessment, planning, encoding and fine-tuning, in that order,
/// then evaluation against the input model and the chosen baseline. The report
/// holds no timings, so equal inputs give equal bytes.
CompressOutput cmd_compress(const Checkpoint& checkpoint, const PipelineConfig& config,
                            const RunOptions& options);

struct NamedCheckpoint {
  std::string name;
  Checkpoint checkpoint;
};

/// Metrics for each checkpoint side by side. All checkpoints must share an
/// architecture.
Json cmd_evaluate(std::span<const NamedCheckpoint> checkpoints, const PipelineConfig& config,
                  const RunOptions& options);

/// Per-token forward latency of the checkpoint with and without its encoded
/// matrices, and a factored versus dense timing of a hidden x hidden layer
/// for each configured rank against the r(m+n)/(mn) cost model.
Json cmd_bench(const Checkpoint& checkpoint, const PipelineConfig& config,
               const RunOptions& options);

/// Human-readable summary of any command report.
std::string render_table(const Json& report);

/// Structural check of a report against the shipped schema subset: types,
/// required keys, enums, minItems and finite numbers. Returns the first
/// violation as "path: message", or an empty string.
std::string validate_against_schema(const Json& instance, const Json& schema);

}  // namespace cce
