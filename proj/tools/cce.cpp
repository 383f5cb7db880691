// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

// Command line front end: train, analyze, compress, evaluate, bench.
//
// Exit codes: 0 success, 1 usage, 2 validation, 3 numerical failure,
// 4 infeasible plan, 5 schedule divergence, 6 checkpoint checksum failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cce/error.hpp"
#include "cce/pipeline.hpp"

namespace {

enum ExitCode {
  kOk = 0,
  kUsage = 1,
  kValidation = 2,
  kNumerical = 3,
  kPlanning = 4,
  kDivergence = 5,
  kChecksum = 6,
};

void write_report(const std::string& path, const cce::Json& report) {
  if (path.empty()) return;
  const std::string text = report.dump(2) + "\n";
  cce::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compression pipeline for a small transformer decoder"};
  app.require_subcommand(1, 1);

  std::uint64_t seed = 1;
  std::string config_path;
  std::string out_path;
  std::string baseline = "magnitude";
  std::size_t threads = 1;
  app.add_option("--seed", seed, "seed for training and evaluation data")->capture_default_str();
  app.add_option("--config", config_path, "INI config file; defaults when omitted")
      ->check(CLI::ExistingFile);
  app.add_option("--out", out_path, "write the JSON report here");
  app.add_option("--baseline", baseline, "baseline compared by compress")
      ->check(CLI::IsMember({"magnitude", "quantize", "none"}))
      ->capture_default_str();
  app.add_option("--threads", threads, "worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  std::string checkpoint_out;
  std::string input;
  std::vector<std::string> inputs;

  auto* train = app.add_subcommand("train", "train the toy model");
  train->add_option("--checkpoint", checkpoint_out, "output checkpoint")->required();
  auto* analyze = app.add_subcommand("analyze", "redundancy analysis of a checkpoint");
  analyze->add_option("checkpoint", input, "input checkpoint")->required()->check(CLI::ExistingFile);
  auto* compress = app.add_subcommand("compress", "compress a dense checkpoint");
  compress->add_option("checkpoint", input, "input checkpoint")->required()->check(CLI::ExistingFile);
  compress->add_option("--checkpoint-out", checkpoint_out, "compressed checkpoint")->required();
  auto* evaluate = app.add_subcommand("evaluate", "metrics for one or more checkpoints");
  evaluate->add_option("checkpoints", inputs, "input checkpoints")
      ->required()
      ->check(CLI::ExistingFile);
  auto* bench = app.add_subcommand("bench", "forward latency, encoded versus dense");
  bench->add_option("checkpoint", input, "input checkpoint")->required()->check(CLI::ExistingFile);
  for (auto* sub : {train, analyze, compress, evaluate, bench}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    const cce::PipelineConfig config =
        config_path.empty() ? cce::PipelineConfig{} : cce::load_config(config_path);
    config.validate();
    cce::RunOptions options;
    options.seed = seed;
    options.threads = threads;
    options.baseline = cce::parse_baseline(baseline);

    cce::Json report;
    if (*train) {
      auto out = cce::cmd_train(config, options);
      cce::save_checkpoint(checkpoint_out, out.checkpoint);
      report = std::move(out.report);
    } else if (*analyze) {
      report = cce::cmd_analyze(cce::load_checkpoint(input), config, options);
    } else if (*compress) {
      auto out = cce::cmd_compress(cce::load_checkpoint(input), config, options);
      cce::save_checkpoint(checkpoint_out, out.checkpoint);
      report = std::move(out.report);
    } else if (*evaluate) {
      std::vector<cce::NamedCheckpoint> checkpoints;
      for (const auto& path : inputs) {
        checkpoints.push_back({std::filesystem::path(path).filename().string(), cce::load_checkpoint(path)});
      }
      report = cce::cmd_evaluate(checkpoints, config, options);
    } else if (*bench) {
      report = cce::cmd_bench(cce::load_checkpoint(input), config, options);
    }
    write_report(out_path, report);
    std::cout << cce::render_table(report);
    return kOk;
  } catch (const cce::PlanningError& e) {
    std::cerr << "error: infeasible plan: " << e.what() << "\n";
    return kPlanning;
  } catch (const cce::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const cce::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const cce::ChecksumError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kChecksum;
  } catch (const cce::DivergenceError& e) {
    std::cerr << "error: schedule diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const cce::NumericalError& e) {
    std::cerr << "error: numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  }
}
