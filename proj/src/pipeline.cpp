// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>

#include "cce/error.hpp"
#include "cce/linalg.hpp"
#include "cce/numeric.hpp"

namespace cce {

namespace {

constexpr std::uint64_t kHeldOutStream = 3;
constexpr std::uint64_t kProbeStream = 4;
constexpr std::uint64_t kTaskTag = 555;

PlanOptions plan_options(const PipelineConfig& config, std::size_t threads) {
  PlanOptions o = config.plan;
  o.threads = threads;
  return o;
}

LossConfig loss_config(const PipelineConfig& config, std::size_t layers) {
  LossConfig l = config.loss;
  l.lambda.assign(layers, config.lambda);
  return l;
}

Json header(std::string_view command, const PipelineConfig& config, const RunOptions& options) {
  Json j;
  j["command"] = command;
  j["tool"] = {{"name", "cce"}, {"version", kToolVersion}};
  j["seed"] = options.seed;
  j["config"] = config_json(config);
  return j;
}

// Relative change, or null when the reference is zero.
Json relative_change(double before, double after) {
  if (before == 0.0) return nullptr;
  return after / before - 1.0;
}

std::size_t stored_parameters(const Checkpoint& c) {
  std::size_t n = 0;
  for (MatrixId id : c.model.compressible()) {
    const auto it = c.encoded.find(id);
    n += it == c.encoded.end() ? c.model.weight(id).size() : it->second.stored_parameters();
  }
  return n;
}

Json redundancy_section(const ModelParameters& model, const PipelineConfig& config,
                        const RunOptions& options) {
  Json out = Json::array();
  std::map<std::pair<std::size_t, std::size_t>, TransformBank> banks;
  for (MatrixKind kind : kMatrixKinds) {
    std::vector<Matrix> layers;
    for (std::size_t b = 0; b < model.config.layers; ++b) layers.push_back(model.weight({b, kind}));
    const auto shape = std::make_pair(layers.front().rows(), layers.front().cols());
    auto it = banks.find(shape);
    if (it == banks.end()) {
      const std::uint64_t seed = mix_seed(options.seed, shape.first * 1000003ULL + shape.second);
      it = banks.emplace(shape, TransformBank::random(seed, config.analysis.bank_size,
                                                      config.analysis.latent_dim,
                                                      shape.first * shape.second))
               .first;
    }
    const auto& bank = it->second;
    const Matrix sim = similarity_matrix(layers, bank, options.threads);
    const auto cov = layer_covariance(layers, bank, config.analysis.covariance_epsilon);
    Json rows = Json::array();
    for (std::size_t i = 0; i < sim.rows(); ++i) {
      const auto r = sim.row(i);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    out.push_back({{"kind", matrix_kind_name(kind)},
                   {"rows", shape.first},
                   {"cols", shape.second},
                   {"similarity", rows},
                   {"covariance_eigenvalues", cov.eigen.eigenvalues},
                   {"covariance_epsilon", cov.epsilon},
                   {"redundant_directions", redundant_subspace(cov).size()}});
  }
  return out;
}

Json plan_json(const CompressionPlan& plan) {
  Json entries = Json::array();
  for (const auto& e : plan.entries) {
    entries.push_back({{"matrix", e.id.name()},
                       {"rows", e.rows},
                       {"cols", e.cols},
                       {"energy_rank", e.energy_rank},
                       {"rank", e.rank},
                       {"sparsity_budget", e.sparsity_budget},
                       {"tau", e.tau},
                       {"lossless", e.lossless},
                       {"order", encoding_order_name(e.order)},
                       {"planned_parameters", e.planned_parameters()}});
  }
  return {{"global_budget", plan.global_budget},
          {"energy_budget", plan.energy_budget},
          {"schedule_steps", plan.schedule_steps},
          {"original_parameters", plan.original_parameters()},
          {"planned_parameters", plan.planned_parameters()},
          {"entries", entries}};
}

Json records_json(std::span<const CompressionRecord> records, std::size_t layers) {
  Json rows = Json::array();
  for (const auto& r : records) {
    rows.push_back({{"matrix", r.id.name()},
                    {"block", r.id.block},
                    {"kind", matrix_kind_name(r.id.kind)},
                    {"pre_params", r.pre_params},
                    {"post_params", r.post_params},
                    {"ratio", r.ratio},
                    {"frobenius_error", r.frobenius_error}});
  }
  return {{"description", "stored parameters and weight error per matrix, ratio per block"},
          {"records", rows},
          {"block_ratios", block_ratios(records, layers)}};
}

Json stability_table(const Json& before, const Json& after) {
  Json blocks = Json::array();
  const auto& mb = before["activations"]["mean"];
  const auto& sb = before["activations"]["stddev"];
  const auto& ma = after["activations"]["mean"];
  const auto& sa = after["activations"]["stddev"];
  const auto& vb = before["attention"]["variability"];
  const auto& va = after["attention"]["variability"];
  for (std::size_t b = 0; b < mb.size(); ++b) {
    blocks.push_back({{"block", b},
                      {"mean_pre", mb[b]},
                      {"mean_post", ma[b]},
                      {"mean_change", relative_change(mb[b], ma[b])},
                      {"stddev_pre", sb[b]},
                      {"stddev_post", sa[b]},
                      {"stddev_change", relative_change(sb[b], sa[b])},
                      {"attention_variability_pre", vb[b]},
                      {"attention_variability_post", va[b]}});
  }
  return {{"description",
           "per-block feed-forward activation mean and spread, and attention variability, before "
           "and after compression"},
          {"blocks", blocks}};
}

template <typename F>
double fastest(std::size_t repeats, std::size_t inner, F&& fn) {
  double best = INFINITY;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < inner; ++i) fn();
    const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    best = std::min(best, d.count() / static_cast<double>(inner));
  }
  return best;
}

// Inner iterations so that one repeat takes about 20 ms.
template <typename F>
std::size_t calibrate(F&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  const std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
  return static_cast<std::size_t>(std::clamp(0.02 / std::max(d.count(), 1e-9), 1.0, 1e6));
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

std::string number(const Json& v, int digits) {
  return v.is_number() ? fixed(v.get<double>(), digits) : std::string("-");
}

}  // namespace

std::string_view baseline_name(Baseline baseline) {
  switch (baseline) {
    case Baseline::None: return "none";
    case Baseline::Magnitude: return "magnitude";
    case Baseline::Quantize: return "quantize";
  }
  return "none";
}

Baseline parse_baseline(std::string_view name) {
  if (name == "none") return Baseline::None;
  if (name == "magnitude") return Baseline::Magnitude;
  if (name == "quantize") return Baseline::Quantize;
  throw ValidationError("unknown baseline '" + std::string(name) + "'");
}

EvaluationData evaluation_data(const PipelineConfig& config, std::uint64_t seed) {
  const auto layout = layout_for(config.model);
  const auto& e = config.evaluation;
  const auto corpus_seed = config.training.corpus_seed;
  return {synthetic_corpus(corpus_seed, e.eval_sequences, e.eval_length, layout, kHeldOutStream),
          ProbeSet::uniform(
              synthetic_corpus(corpus_seed, e.probe_sequences, e.probe_length, layout, kProbeStream)),
          classification_task(mix_seed(seed, kTaskTag), e.classification_examples, e.content_length,
                              layout, e.class_signal)};
}

std::vector<double> robustness_curve(const ModelParameters& model,
                                     std::span<const LabeledExample> examples,
                                     const EvaluationConfig& evaluation, const VocabLayout& layout,
                                     std::size_t threads) {
  std::vector<double> curve;
  for (double level : evaluation.noise_levels) {
    std::vector<LabeledExample> noisy(examples.begin(), examples.end());
    for (std::size_t i = 0; i < noisy.size(); ++i) {
      auto& t = noisy[i].tokens;
      const std::span<const Token> content(t.data(), t.size() - 1);
      const auto p = perturb_tokens(content, level, evaluation.noise_kind,
                                    mix_seed(evaluation.noise_seed, i), layout.content_size());
      std::copy(p.tokens.begin(), p.tokens.end(), t.begin());
    }
    curve.push_back(classification_accuracy(model, noisy, layout, threads));
  }
  return curve;
}

Json model_metrics(const ModelParameters& model, const EvaluationData& data,
                   const PipelineConfig& config, std::size_t threads) {
  const auto layout = layout_for(model.config);
  const auto act = activation_stats(model, data.held_out, threads);
  const auto att = attention_stats(model, data.held_out, threads);
  return {{"perplexity", perplexity(model, data.held_out, threads)},
          {"accuracy", classification_accuracy(model, data.examples, layout, threads)},
          {"robustness", robustness_curve(model, data.examples, config.evaluation, layout, threads)},
          {"activations", {{"mean", act.mean}, {"stddev", act.stddev}}},
          {"attention", {{"variability", att.variability}, {"dispersion", att.dispersion}}}};
}

Json config_json(const PipelineConfig& config) {
  Json out = Json::object();
  for (const auto& e : config_entries(config)) {
    Json value;
    switch (e.kind) {
      case ConfigValueKind::Integer: value = std::stoull(e.value); break;
      case ConfigValueKind::Real: value = std::stod(e.value); break;
      case ConfigValueKind::Boolean: value = e.value == "true"; break;
      case ConfigValueKind::Text: value = e.value; break;
      case ConfigValueKind::RealList:
      case ConfigValueKind::IntegerList: {
        value = Json::array();
        std::size_t begin = 0;
        while (begin <= e.value.size()) {
          auto end = e.value.find(',', begin);
          if (end == std::string::npos) end = e.value.size();
          const std::string item = e.value.substr(begin, end - begin);
          if (e.kind == ConfigValueKind::IntegerList) {
            value.push_back(std::stoull(item));
          } else {
            value.push_back(std::stod(item));
          }
          begin = end + 1;
        }
        break;
      }
    }
    out[e.section][e.key] = value;
  }
  return out;
}

TrainOutput cmd_train(const PipelineConfig& config, const RunOptions& options) {
  config.validate();
  TrainingConfig training = config.training;
  training.seed = options.seed;
  training.threads = options.threads;
  auto result = train_toy(config.model, training);
  TrainOutput out{{std::move(result.model), {}}, header("train", config, options)};
  const auto data = evaluation_data(config, options.seed);
  out.report["training"] = {{"final_perplexity", result.final_perplexity},
                            {"loss_trace", result.loss_trace}};
  out.report["metrics"] = model_metrics(out.checkpoint.model, data, config, options.threads);
  return out;
}

Json cmd_analyze(const Checkpoint& checkpoint, const PipelineConfig& config,
                 const RunOptions& options) {
  config.validate();
  checkpoint.validate();
  const auto& model = checkpoint.model;
  Json report = header("analyze", config, options);
  report["redundancy"] = redundancy_section(model, config, options);
  Json profiles = Json::array();
  for (MatrixId id : model.compressible()) {
    const auto sigma = singular_values(model.weight(id), id.name());
    const double tau = dynamic_threshold(sigma, config.threshold);
    profiles.push_back({{"matrix", id.name()},
                        {"singular_values", sigma},
                        {"tau", tau},
                        {"energy_rank", retained_count(sigma, tau)}});
  }
  report["singular_values"] = profiles;
  return report;
}

CompressOutput cmd_compress(const Checkpoint& checkpoint, const PipelineConfig& config,
                            const RunOptions& options) {
  config.validate();
  checkpoint.validate();
  if (!checkpoint.encoded.empty()) {
    throw ValidationError("compress expects a dense checkpoint");
  }
  const auto& model = checkpoint.model;
  Json report = header("compress", config, options);
  report["baseline"] = baseline_name(options.baseline);

  // Redundancy assessment.
  report["redundancy"] = redundancy_section(model, config, options);
  // Pruning plan.
  const auto plan =
      plan_compression(model, config.budget, config.threshold, plan_options(config, options.threads));
  report["plan"] = plan_json(plan);
  // Structured encoding and fine-tuning, interleaved per schedule round.
  const auto data = evaluation_data(config, options.seed);
  ScheduleOptions schedule = config.schedule;
  schedule.threads = options.threads;
  auto compressed = run_schedule(model, plan, loss_config(config, model.compressible().size()),
                                 data.probe, schedule);
  CompressOutput out{{compressed.model, compressed.encoded}, {}};

  const Json before = model_metrics(model, data, config, options.threads);
  const Json after = model_metrics(compressed.model, data, config, options.threads);
  Json models = Json::object();
  models["uncompressed"] = before;
  models["uncompressed"]["stored_parameters"] = plan.original_parameters();
  models["cce"] = after;
  models["cce"]["stored_parameters"] = compressed.stored_parameters();
  if (options.baseline == Baseline::Magnitude) {
    models["magnitude"] =
        model_metrics(baseline_magnitude_prune(model, config.budget), data, config, options.threads);
    models["magnitude"]["stored_parameters"] = magnitude_prune_parameters(model, config.budget);
  } else if (options.baseline == Baseline::Quantize) {
    models["quantize"] = model_metrics(baseline_uniform_quantize(model, config.evaluation.quantize_bits),
                                       data, config, options.threads);
    models["quantize"]["bits"] = config.evaluation.quantize_bits;
  }
  report["models"] = models;

  Json tables = Json::object();
  tables["layer_compression"] = records_json(compressed.records, model.config.layers);
  Json fidelity = Json::array();
  Json curves = Json::object();
  for (const auto& [name, m] : models.items()) {
    Json row = {{"model", name}, {"perplexity", m["perplexity"]}, {"accuracy", m["accuracy"]}};
    if (m.contains("stored_parameters")) row["stored_parameters"] = m["stored_parameters"];
    fidelity.push_back(row);
    curves[name] = m["robustness"];
  }
  tables["fidelity"] = {{"description", "held-out perplexity and task accuracy per model"},
                        {"rows", fidelity}};
  tables["stability"] = stability_table(before, after);
  tables["robustness"] = {{"description", "task accuracy against input perturbation level"},
                          {"noise_kind", noise_kind_name(config.evaluation.noise_kind)},
                          {"levels", config.evaluation.noise_levels},
                          {"curves", curves}};
  Json steps = Json::array();
  for (const auto& s : compressed.trace) {
    steps.push_back({{"step", s.step},
                     {"parameters", s.parameters},
                     {"reconstruction_loss", s.reconstruction_loss}});
  }
  Json tune = Json::array();
  for (const auto& b : compressed.fine_tune_trajectory) {
    tune.push_back({{"rec", b.rec}, {"sim", b.sim}, {"reg", b.reg}, {"total", b.total}});
  }
  tables["loss"] = {{"description", "reconstruction loss per schedule round and fine-tuning losses"},
                    {"schedule", steps},
                    {"fine_tune", tune}};
  report["tables"] = tables;
  out.report = std::move(report);
  return out;
}

Json cmd_evaluate(std::span<const NamedCheckpoint> checkpoints, const PipelineConfig& config,
                  const RunOptions& options) {
  config.validate();
  if (checkpoints.empty()) throw ValidationError("evaluate needs at least one checkpoint");
  for (const auto& c : checkpoints) {
    c.checkpoint.validate();
    if (!(c.checkpoint.model.config == checkpoints.front().checkpoint.model.config)) {
      throw ValidationError("evaluate: checkpoint " + c.name + " has a different architecture");
    }
  }
  const auto data = evaluation_data(config, options.seed);
  Json report = header("evaluate", config, options);
  Json models = Json::array();
  Json fidelity = Json::array();
  Json curves = Json::object();
  for (const auto& c : checkpoints) {
    Json m = model_metrics(c.checkpoint.model, data, config, options.threads);
    const std::size_t stored = stored_parameters(c.checkpoint);
    fidelity.push_back({{"model", c.name},
                        {"stored_parameters", stored},
                        {"perplexity", m["perplexity"]},
                        {"accuracy", m["accuracy"]}});
    curves[c.name] = m["robustness"];
    m["name"] = c.name;
    m["stored_parameters"] = stored;
    m["encoded_matrices"] = c.checkpoint.encoded.size();
    models.push_back(std::move(m));
  }
  report["models"] = models;
  report["tables"] = {
      {"fidelity", {{"description", "held-out perplexity and task accuracy per model"},
                    {"rows", fidelity}}},
      {"robustness", {{"description", "task accuracy against input perturbation level"},
                      {"noise_kind", noise_kind_name(config.evaluation.noise_kind)},
                      {"levels", config.evaluation.noise_levels},
                      {"curves", curves}}}};
  return report;
}

Json cmd_bench(const Checkpoint& checkpoint, const PipelineConfig& config,
               const RunOptions& options) {
  config.validate();
  checkpoint.validate();
  const auto& model = checkpoint.model;
  const auto& e = config.evaluation;
  const std::size_t tokens = std::min(e.bench_tokens, model.config.max_seq);
  const auto layout = layout_for(model.config);
  const auto input = synthetic_corpus(config.training.corpus_seed, 1, tokens, layout, 5).front();
  volatile double sink = 0.0;

  ForwardOptions factored;
  factored.factored = &checkpoint.encoded;
  auto run_dense = [&] { sink = sink + forward(model, input).logits(0, 0); };
  auto run_factored = [&] { sink = sink + forward(model, input, factored).logits(0, 0); };
  const std::size_t inner = calibrate(run_dense);
  // Interleave the two so drift in machine load hits both.
  double dense = INFINITY, compressed = INFINITY;
  for (std::size_t r = 0; r < e.bench_repeats; ++r) {
    dense = std::min(dense, fastest(1, inner, run_dense));
    compressed = std::min(compressed, fastest(1, inner, run_factored));
  }
  Json report = header("bench", config, options);
  report["model"] = {{"tokens", tokens},
                     {"encoded_matrices", checkpoint.encoded.size()},
                     {"dense_seconds_per_token", dense / static_cast<double>(tokens)},
                     {"compressed_seconds_per_token", compressed / static_cast<double>(tokens)},
                     {"ratio", compressed / dense}};

  const std::size_t n = model.config.hidden;
  Rng rng(mix_seed(options.seed, 0xBE7C));
  Matrix x(tokens, n), w(n, n);
  for (double& v : x.values()) v = rng.normal();
  for (double& v : w.values()) v = rng.normal();
  Json layers = Json::array();
  for (std::size_t rank : e.bench_ranks) {
    EncodedLayer enc;
    enc.left = Matrix(n, rank);
    enc.right = Matrix(rank, n);
    for (double& v : enc.left.values()) v = rng.normal();
    for (double& v : enc.right.values()) v = rng.normal();
    enc.rescale.assign(n, 1.0);
    auto layer_dense = [&] { sink = sink + matmul(x, w.transpose())(0, 0); };
    auto layer_factored = [&] { sink = sink + apply_encoded(enc, x)(0, 0); };
    const std::size_t k = calibrate(layer_dense);
    double td = INFINITY, tf = INFINITY;
    for (std::size_t r = 0; r < e.bench_repeats; ++r) {
      td = std::min(td, fastest(1, k, layer_dense));
      tf = std::min(tf, fastest(1, k, layer_factored));
    }
    const double predicted = static_cast<double>(rank * (n + n)) / static_cast<double>(n * n);
    const double measured = tf / td;
    layers.push_back({{"rows", n},
                      {"cols", n},
                      {"rank", rank},
                      {"tokens", tokens},
                      {"predicted_ratio", predicted},
                      {"measured_ratio", measured},
                      {"within_2x", measured <= 2.0 * predicted && measured >= 0.5 * predicted}});
  }
  report["layers"] = layers;
  report["tables"] = {
      {"latency", {{"description", "forward time per token, encoded versus dense, and factored "
                                   "layer cost against the r(m+n)/(mn) model"},
                   {"model_ratio", compressed / dense}}}};
  return report;
}

std::string render_table(const Json& report) {
  std::string out;
  const std::string command = report.value("command", "");
  out += "cce " + command + " (version " + report["tool"].value("version", "") + ", seed " +
         std::to_string(report.value("seed", std::uint64_t{0})) + ")\n";
  auto model_rows = [&](const Json& rows) {
    out += "\n" + pad("model", 14) + pad("params", 10) + pad("perplexity", 12) + pad("accuracy", 10) +
           "\n";
    for (const auto& r : rows) {
      const std::string params =
          r.contains("stored_parameters") ? std::to_string(r["stored_parameters"].get<std::size_t>()) : "-";
      out += pad(r["model"].get<std::string>(), 14) + pad(params, 10) + pad(number(r["perplexity"], 3), 12) +
             pad(number(r["accuracy"], 3), 10) + "\n";
    }
  };
  auto curve_rows = [&](const Json& table) {
    out += "\n" + pad("level", 14);
    for (const auto& l : table["levels"]) out += pad(number(l, 2), 8);
    out += "\n";
    for (const auto& [name, c] : table["curves"].items()) {
      out += pad(name, 14);
      for (const auto& a : c) out += pad(number(a, 3), 8);
      out += "\n";
    }
  };
  if (command == "train") {
    const auto& m = report["metrics"];
    out += "perplexity " + number(m["perplexity"], 3) + ", accuracy " + number(m["accuracy"], 3) + "\n";
  } else if (command == "analyze") {
    out += "\n" + pad("kind", 6) + pad("shape", 10) + pad("redundant", 11) + "  top eigenvalues\n";
    for (const auto& r : report["redundancy"]) {
      out += pad(r["kind"].get<std::string>(), 6) +
             pad(std::to_string(r["rows"].get<std::size_t>()) + "x" + std::to_string(r["cols"].get<std::size_t>()), 10) +
             pad(std::to_string(r["redundant_directions"].get<std::size_t>()), 11) + " ";
      const auto& ev = r["covariance_eigenvalues"];
      for (std::size_t i = 0; i < std::min<std::size_t>(3, ev.size()); ++i) out += " " + number(ev[i], 4);
      out += "\n";
    }
  } else if (command == "compress") {
    const auto& plan = report["plan"];
    out += "stored " + std::to_string(plan["planned_parameters"].get<std::size_t>()) + " of " +
           std::to_string(plan["original_parameters"].get<std::size_t>()) + " compressible parameters\n";
    out += "\n" + pad("block", 6) + pad("ratio", 8) + pad("mean pre", 11) + pad("mean post", 11) +
           pad("std pre", 10) + pad("std post", 10) + "\n";
    const auto& ratios = report["tables"]["layer_compression"]["block_ratios"];
    const auto& blocks = report["tables"]["stability"]["blocks"];
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& s = blocks[b];
      out += pad(std::to_string(b), 6) + pad(number(ratios[b], 3), 8) + pad(number(s["mean_pre"], 4), 11) +
             pad(number(s["mean_post"], 4), 11) + pad(number(s["stddev_pre"], 4), 10) +
             pad(number(s["stddev_post"], 4), 10) + "\n";
    }
    model_rows(report["tables"]["fidelity"]["rows"]);
    curve_rows(report["tables"]["robustness"]);
  } else if (command == "evaluate") {
    model_rows(report["tables"]["fidelity"]["rows"]);
    curve_rows(report["tables"]["robustness"]);
  } else if (command == "bench") {
    const auto& m = report["model"];
    out += "forward per token: dense " + fixed(1e6 * m["dense_seconds_per_token"].get<double>(), 2) +
           " us, encoded " + fixed(1e6 * m["compressed_seconds_per_token"].get<double>(), 2) +
           " us, ratio " + number(m["ratio"], 3) + "\n";
    out += "\n" + pad("layer", 8) + pad("rank", 6) + pad("predicted", 11) + pad("measured", 10) + "\n";
    for (const auto& l : report["layers"]) {
      out += pad(std::to_string(l["rows"].get<std::size_t>()) + "x" + std::to_string(l["cols"].get<std::size_t>()), 8) +
             pad(std::to_string(l["rank"].get<std::size_t>()), 6) + pad(number(l["predicted_ratio"], 3), 11) +
             pad(number(l["measured_ratio"], 3), 10) + "\n";
    }
  }
  return out;
}

std::string validate_against_schema(const Json& instance, const Json& schema) {
  std::function<std::string(const Json&, const Json&, const std::string&)> check;
  check = [&](const Json& v, const Json& s, const std::string& path) -> std::string {
    if (s.contains("$ref")) {
      const std::string ref = s["$ref"].get<std::string>();
      const std::string prefix = "#/$defs/";
      if (ref.rfind(prefix, 0) != 0) return path + ": unsupported $ref " + ref;
      return check(v, schema["$defs"].at(ref.substr(prefix.size())), path);
    }
    if (s.contains("type")) {
      auto matches = [&](const std::string& t) {
        if (t == "object") return v.is_object();
        if (t == "array") return v.is_array();
        if (t == "string") return v.is_string();
        if (t == "boolean") return v.is_boolean();
        if (t == "null") return v.is_null();
        if (t == "integer") return v.is_number_integer();
        if (t == "number") return v.is_number();
        return false;
      };
      bool ok = false;
      if (s["type"].is_array()) {
        for (const auto& t : s["type"]) ok = ok || matches(t.get<std::string>());
      } else {
        ok = matches(s["type"].get<std::string>());
      }
      if (!ok) return path + ": expected type " + s["type"].dump();
    }
    if (v.is_number_float() && !std::isfinite(v.get<double>())) return path + ": non-finite number";
    if (s.contains("enum")) {
      if (std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end()) {
        return path + ": value not in enum";
      }
    }
    if (v.is_number() && s.contains("minimum") && v.get<double>() < s["minimum"].get<double>()) {
      return path + ": below minimum";
    }
    if (v.is_object()) {
      if (s.contains("required")) {
        for (const auto& key : s["required"]) {
          if (!v.contains(key.get<std::string>())) {
            return path + ": missing required key " + key.get<std::string>();
          }
        }
      }
      for (const auto& [key, child] : v.items()) {
        if (s.contains("properties") && s["properties"].contains(key)) {
          if (auto err = check(child, s["properties"][key], path + "/" + key); !err.empty()) return err;
        } else if (s.contains("additionalProperties")) {
          const auto& extra = s["additionalProperties"];
          if (extra.is_boolean()) {
            if (!extra.get<bool>()) return path + ": unexpected key " + key;
          } else if (auto err = check(child, extra, path + "/" + key); !err.empty()) {
            return err;
          }
        }
      }
    }
    if (v.is_array()) {
      if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) {
        return path + ": fewer than minItems entries";
      }
      if (s.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (auto err = check(v[i], s["items"], path + "/" + std::to_string(i)); !err.empty()) {
            return err;
          }
        }
      }
    }
    return {};
  };
  return check(instance, schema, "");
}

}  // namespace cce
