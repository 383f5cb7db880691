// Copyright 2026 The CCE Authors
// SPDX-License-Identifier: Apache-2.0

#include "cce/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "cce/error.hpp"

namespace cce {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ValidationError("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

double parse_real(const std::string& s) {
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ValidationError("expected a finite number, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ValidationError("expected true or false, got '" + s + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& s, T (*item)(const std::string&)) {
  std::vector<T> out;
  std::stringstream in(s);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(item(trim(part)));
  if (out.empty()) throw ValidationError("expected a comma separated list");
  return out;
}

std::size_t parse_size(const std::string& s) { return static_cast<std::size_t>(parse_u64(s)); }

std::string format_real(double v) {
  char buf[32];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
std::string format_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ", ";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_real(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Field {
  const char* section;
  const char* key;
  ConfigValueKind kind;
  const char* doc;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
Field size_field(const char* section, const char* key, const char* doc, T PipelineConfig::*group,
                 std::size_t T::*member) {
  return {section, key, ConfigValueKind::Integer, doc,
          [=](PipelineConfig& c, const std::string& v) { c.*group.*member = parse_size(v); },
          [=](const PipelineConfig& c) { return std::to_string(c.*group.*member); }};
}

template <typename T>
Field real_field(const char* section, const char* key, const char* doc, T PipelineConfig::*group,
                 double T::*member) {
  return {section, key, ConfigValueKind::Real, doc,
          [=](PipelineConfig& c, const std::string& v) { c.*group.*member = parse_real(v); },
          [=](const PipelineConfig& c) { return format_real(c.*group.*member); }};
}

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> table = {
      size_field("model", "layers", "decoder blocks", &C::model, &ModelConfig::layers),
      size_field("model", "hidden", "residual stream width", &C::model, &ModelConfig::hidden),
      size_field("model", "heads", "attention heads (must divide hidden)", &C::model,
                 &ModelConfig::heads),
      size_field("model", "ffn", "feed-forward width", &C::model, &ModelConfig::ffn),
      size_field("model", "vocab", "vocabulary size", &C::model, &ModelConfig::vocab),
      size_field("model", "max_seq", "longest input sequence", &C::model, &ModelConfig::max_seq),
      size_field("model", "train_steps", "Adam steps in train", &C::training,
                 &TrainingConfig::steps),
      size_field("model", "batch", "sequences per training step", &C::training,
                 &TrainingConfig::batch),
      size_field("model", "sequence_length", "training sequence length", &C::training,
                 &TrainingConfig::sequence_length),
      real_field("model", "learning_rate", "Adam learning rate", &C::training,
                 &TrainingConfig::learning_rate),
      real_field("model", "init_scale", "initial weight standard deviation", &C::training,
                 &TrainingConfig::init_scale),
      real_field("model", "class_fraction", "share of each batch from the classification task",
                 &C::training, &TrainingConfig::class_fraction),
      {"model", "corpus_seed", ConfigValueKind::Integer,
       "seed of the Markov chain shared by training and evaluation",
       [](C& c, const std::string& v) { c.training.corpus_seed = parse_u64(v); },
       [](const C& c) { return std::to_string(c.training.corpus_seed); }},

      size_field("analysis", "bank_size", "random transforms per bank", &C::analysis,
                 &AnalysisConfig::bank_size),
      size_field("analysis", "latent_dim", "rows of each transform", &C::analysis,
                 &AnalysisConfig::latent_dim),
      real_field("analysis", "covariance_epsilon", "relative ridge added to the covariance",
                 &C::analysis, &AnalysisConfig::covariance_epsilon),

      {"plan", "budget", ConfigValueKind::Real,
       "stored parameters of compressible matrices / original, in (0, 1]",
       [](C& c, const std::string& v) { c.budget = parse_real(v); },
       [](const C& c) { return format_real(c.budget); }},
      {"plan", "threshold", ConfigValueKind::Text, "energy or fixed",
       [](C& c, const std::string& v) {
         if (v == "energy") {
           c.threshold.mode = ThresholdPolicy::Mode::EnergyBudget;
         } else if (v == "fixed") {
           c.threshold.mode = ThresholdPolicy::Mode::Fixed;
         } else {
           throw ValidationError("expected energy or fixed, got '" + v + "'");
         }
       },
       [](const C& c) {
         return std::string(c.threshold.mode == ThresholdPolicy::Mode::Fixed ? "fixed" : "energy");
       }},
      {"plan", "energy_budget", ConfigValueKind::Real,
       "spectral energy kept above the threshold (energy mode)",
       [](C& c, const std::string& v) { c.threshold.energy_budget = parse_real(v); },
       [](const C& c) { return format_real(c.threshold.energy_budget); }},
      {"plan", "fixed_tau", ConfigValueKind::Real, "singular value cutoff (fixed mode)",
       [](C& c, const std::string& v) { c.threshold.fixed_tau = parse_real(v); },
       [](const C& c) { return format_real(c.threshold.fixed_tau.value_or(0.0)); }},
      real_field("plan", "end_layer_energy", "weight energy the first and last block keep",
                 &C::plan, &PlanOptions::end_layer_energy),
      size_field("plan", "schedule_steps", "rounds from dense to the target", &C::plan,
                 &PlanOptions::schedule_steps),
      {"plan", "encoding_order", ConfigValueKind::Text, "residual_first or factors_first",
       [](C& c, const std::string& v) { c.plan.order = parse_encoding_order(v); },
       [](const C& c) { return std::string(encoding_order_name(c.plan.order)); }},
      size_field("plan", "residual_grid", "residual sizes tried per matrix", &C::plan,
                 &PlanOptions::residual_grid),

      real_field("loss", "alpha", "weight of the reconstruction term", &C::loss,
                 &LossConfig::alpha),
      real_field("loss", "beta", "weight of the small singular value term", &C::loss,
                 &LossConfig::beta),
      real_field("loss", "gamma", "weight of the nuclear norm term", &C::loss, &LossConfig::gamma),
      {"loss", "lambda", ConfigValueKind::Real, "per-matrix nuclear norm weight",
       [](C& c, const std::string& v) { c.lambda = parse_real(v); },
       [](const C& c) { return format_real(c.lambda); }},
      real_field("loss", "tau", "singular value cutoff of the small value term", &C::loss,
                 &LossConfig::tau),

      size_field("schedule", "fine_tune_steps", "gradient steps after each round", &C::schedule,
                 &ScheduleOptions::fine_tune_steps),
      real_field("schedule", "step_size", "initial gradient step", &C::schedule,
                 &ScheduleOptions::step_size),
      real_field("schedule", "divergence_ceiling",
                 "largest allowed growth of the reconstruction loss between rounds",
                 &C::schedule, &ScheduleOptions::divergence_ceiling),
      {"schedule", "refresh_rank_targets", ConfigValueKind::Boolean,
       "reset nuclear norm targets every round",
       [](C& c, const std::string& v) { c.schedule.refresh_rank_targets = parse_bool(v); },
       [](const C& c) { return std::string(c.schedule.refresh_rank_targets ? "true" : "false"); }},

      size_field("evaluation", "eval_sequences", "held-out sequences for perplexity",
                 &C::evaluation, &EvaluationConfig::eval_sequences),
      size_field("evaluation", "eval_length", "held-out sequence length", &C::evaluation,
                 &EvaluationConfig::eval_length),
      size_field("evaluation", "probe_sequences", "probe inputs for the reconstruction loss",
                 &C::evaluation, &EvaluationConfig::probe_sequences),
      size_field("evaluation", "probe_length", "probe input length", &C::evaluation,
                 &EvaluationConfig::probe_length),
      size_field("evaluation", "classification_examples", "examples per accuracy point",
                 &C::evaluation, &EvaluationConfig::classification_examples),
      size_field("evaluation", "content_length", "content tokens before the query marker",
                 &C::evaluation, &EvaluationConfig::content_length),
      real_field("evaluation", "class_signal", "share of class indicator tokens",
                 &C::evaluation, &EvaluationConfig::class_signal),
      {"evaluation", "noise_kind", ConfigValueKind::Text,
       "substitution, swap or shuffle",
       [](C& c, const std::string& v) { c.evaluation.noise_kind = parse_noise_kind(v); },
       [](const C& c) { return std::string(noise_kind_name(c.evaluation.noise_kind)); }},
      {"evaluation", "noise_levels", ConfigValueKind::RealList,
       "strictly increasing perturbation levels in [0, 1]",
       [](C& c, const std::string& v) { c.evaluation.noise_levels = parse_list(v, &parse_real); },
       [](const C& c) { return format_list(c.evaluation.noise_levels); }},
      {"evaluation", "noise_seed", ConfigValueKind::Integer, "seed of the perturbations",
       [](C& c, const std::string& v) { c.evaluation.noise_seed = parse_u64(v); },
       [](const C& c) { return std::to_string(c.evaluation.noise_seed); }},
      {"evaluation", "quantize_bits", ConfigValueKind::Integer,
       "bits of the quantization baseline (1 to 16)",
       [](C& c, const std::string& v) {
         const auto b = parse_u64(v);
         if (b < 1 || b > 16) throw ValidationError("quantize_bits must lie in [1, 16]");
         c.evaluation.quantize_bits = static_cast<unsigned>(b);
       },
       [](const C& c) { return std::to_string(c.evaluation.quantize_bits); }},
      {"evaluation", "bench_ranks", ConfigValueKind::IntegerList, "factor ranks timed by bench",
       [](C& c, const std::string& v) { c.evaluation.bench_ranks = parse_list(v, &parse_size); },
       [](const C& c) { return format_list(c.evaluation.bench_ranks); }},
      size_field("evaluation", "bench_tokens", "tokens per timed forward pass", &C::evaluation,
                 &EvaluationConfig::bench_tokens),
      size_field("evaluation", "bench_repeats", "timing repeats, fastest kept", &C::evaluation,
                 &EvaluationConfig::bench_repeats),
  };
  return table;
}

}  // namespace

void PipelineConfig::validate() const {
  model.validate();
  threshold.validate();
  if (!(budget > 0.0 && budget <= 1.0)) throw ValidationError("plan.budget must lie in (0, 1]");
  if (!(plan.end_layer_energy >= 0.0 && plan.end_layer_energy <= 1.0)) {
    throw ValidationError("plan.end_layer_energy must lie in [0, 1]");
  }
  if (plan.schedule_steps == 0) throw ValidationError("plan.schedule_steps must be positive");
  if (plan.residual_grid == 0) throw ValidationError("plan.residual_grid must be positive");
  if (training.steps == 0 || training.batch == 0) {
    throw ValidationError("model.train_steps and model.batch must be positive");
  }
  if (training.sequence_length < 2 || training.sequence_length > model.max_seq) {
    throw ValidationError("model.sequence_length must lie in [2, max_seq]");
  }
  if (!(training.learning_rate > 0.0) || !(training.init_scale >= 0.0)) {
    throw ValidationError("model.learning_rate must be positive and init_scale non-negative");
  }
  if (!(training.class_fraction >= 0.0 && training.class_fraction <= 1.0)) {
    throw ValidationError("model.class_fraction must lie in [0, 1]");
  }
  if (analysis.bank_size == 0 || analysis.latent_dim == 0) {
    throw ValidationError("analysis.bank_size and analysis.latent_dim must be positive");
  }
  if (!(analysis.covariance_epsilon >= 0.0)) {
    throw ValidationError("analysis.covariance_epsilon must be non-negative");
  }
  if (loss.alpha < 0.0 || loss.beta < 0.0 || loss.gamma < 0.0 || lambda < 0.0 || loss.tau < 0.0) {
    throw ValidationError("loss coefficients must be non-negative");
  }
  if (!(schedule.step_size >= 0.0)) throw ValidationError("schedule.step_size must be non-negative");
  if (!(schedule.divergence_ceiling > 1.0)) {
    throw ValidationError("schedule.divergence_ceiling must exceed 1");
  }
  const auto& e = evaluation;
  if (e.eval_sequences == 0 || e.probe_sequences == 0 || e.classification_examples == 0) {
    throw ValidationError("evaluation set sizes must be positive");
  }
  if (e.eval_length < 2 || e.eval_length > model.max_seq || e.probe_length == 0 ||
      e.probe_length > model.max_seq) {
    throw ValidationError("evaluation sequence lengths must fit max_seq");
  }
  if (e.content_length == 0 || e.content_length + 2 > model.max_seq) {
    throw ValidationError("evaluation.content_length must leave room for the query and label");
  }
  if (!(e.class_signal >= 0.0 && e.class_signal <= 1.0)) {
    throw ValidationError("evaluation.class_signal must lie in [0, 1]");
  }
  for (std::size_t i = 0; i < e.noise_levels.size(); ++i) {
    if (!(e.noise_levels[i] >= 0.0 && e.noise_levels[i] <= 1.0)) {
      throw ValidationError("evaluation.noise_levels must lie in [0, 1]");
    }
    if (i > 0 && !(e.noise_levels[i] > e.noise_levels[i - 1])) {
      throw ValidationError("evaluation.noise_levels must be strictly increasing");
    }
  }
  for (std::size_t r : e.bench_ranks) {
    if (r == 0 || r > model.hidden) throw ValidationError("evaluation.bench_ranks must lie in [1, hidden]");
  }
  if (e.bench_tokens == 0 || e.bench_tokens > model.max_seq || e.bench_repeats == 0) {
    throw ValidationError("evaluation.bench_tokens must fit max_seq and bench_repeats be positive");
  }
}

PipelineConfig parse_config(std::string_view text) {
  PipelineConfig config;
  std::set<std::string> known_sections;
  for (const auto& f : fields()) known_sections.insert(f.section);
  std::set<std::string> seen;
  std::string section;
  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    auto end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(begin, end - begin);
    begin = end + 1;
    ++line_no;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    const auto comment = raw.find_first_of("#;");
    const std::string line = trim(raw.substr(0, comment));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + "malformed section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (!known_sections.contains(section)) {
        throw ValidationError(where + "unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + "expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (section.empty()) throw ValidationError(where + "key '" + key + "' outside a section");
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (section == f.section && key == f.key) field = &f;
    }
    if (!field) throw ValidationError(where + "unknown key " + section + "." + key);
    if (!seen.insert(section + "." + key).second) {
      throw ValidationError(where + "duplicate key " + section + "." + key);
    }
    try {
      field->set(config, value);
    } catch (const ValidationError& e) {
      throw ValidationError(where + section + "." + key + ": " + e.what());
    }
  }
  config.validate();
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::vector<ConfigEntry> config_entries(const PipelineConfig& config) {
  std::vector<ConfigEntry> out;
  for (const auto& f : fields()) out.push_back({f.section, f.key, f.kind, f.get(config), f.doc});
  return out;
}

std::string default_config_text() {
  std::string out;
  std::string section;
  for (const auto& e : config_entries(PipelineConfig{})) {
    if (e.section != section) {
      if (!section.empty()) out += "\n";
      section = e.section;
      out += "[" + section + "]\n";
    }
    out += "# " + e.doc + "\n" + e.key + " = " + e.value + "\n";
  }
  return out;
}

}  // namespace cce
