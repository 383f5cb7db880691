// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/loss.hpp"
#include "cce/model.hpp"
#include "cce/redundancy.hpp"
#include "cce/schedule.hpp"

namespace cce {

struct AnalysisConfig {
  std::size_t bank_size = 8;  // transforms per bank
  std::size_t latent_dim = 16;
  double covariance_epsilon = 1e-6;
};

struct EvaluationConfig {
  std::size_t eval_sequences = 64;
  std::size_t eval_length = 24;
  std::size_t probe_sequences = 64;
  std::size_t probe_length = 16;
  std::size_t classification_examples = 400;
  std::size_t content_length = 21;
  double class_signal = 0.35;
  NoiseKind noise_kind = NoiseKind::Substitution;
  std::vector<double> noise_levels = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::uint64_t noise_seed = 99;
  unsigned quantize_bits = 8;
  std::vector<std::size_t> bench_ranks = {4, 8};
  std::size_t bench_tokens = 64;
  std::size_t bench_repeats = 15;
};

/// Everything the command line pipeline reads from a config file. Thread
/// count and seed come from flags and never change results.
struct PipelineConfig {
  ModelConfig model;
  TrainingConfig training;  // seed and threads ignored; set from flags
  AnalysisConfig analysis;
  double budget = 0.6;
  ThresholdPolicy threshold;
  PlanOptions plan;  // threads ignored
  LossConfig loss;   // lambda broadcast from one value
  double lambda = 0.0;
  ScheduleOptions schedule;  // threads ignored
  EvaluationConfig evaluation;

  /// Range checks across sections; throws ValidationError.
  void validate() const;
};

enum class ConfigValueKind { Integer, Real, Boolean, Text, RealList, IntegerList };

struct ConfigEntry {
  std::string section;
  std::string key;
  ConfigValueKind kind;
  std::string value;  // canonical text form
  std::string doc;
};

/// Parses "[section]" headers and "key = value" lines; '#' and ';' start
/// comments. Unknown sections or keys, duplicates and malformed values throw
/// ValidationError naming the line.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

/// Every key with its current value, in file order.
std::vector<ConfigEntry> config_entries(const PipelineConfig& config);
/// A complete commented config file holding the defaults.
std::string default_config_text();

}  // namespace cce
