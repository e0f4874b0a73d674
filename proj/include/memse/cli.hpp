#pragma once

// Command-line front end. Each command writes <out>/report.json plus CSV
// side files; wall-clock timing goes to <out>/timing.json so that reports
// stay byte-identical across runs.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "memse/memse.hpp"

namespace memse::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct OptimizeSettings {
  double budget = 0.0;
  Granularity granularity = Granularity::global;
  GaParams ga;
  std::optional<std::pair<double, double>> bounds;
  std::size_t sample = 100;
  BatchAggregate batch_agg = BatchAggregate::mean;
  bool warm_start = true;
};

struct RunConfig {
  fs::path network;
  fs::path inputs;
  CrossbarConfig crossbar;
  std::vector<CrossbarConfig> layers;  // explicit per-layer configs, empty when global
  std::uint64_t seed = 0;
  std::string agg_outputs = "mean";
  std::string agg_inputs = "mean";
  bool coefficients = false;
  std::optional<std::size_t> max_inputs;
  std::size_t trials = 200;
  bool clip = false;
  bool freeze_per_trial = false;
  bool record_moments = false;
  OptimizeSettings optimize;
  // Not part of the embedded config: they do not change results.
  fs::path output = "memse_out";
  unsigned threads = 1;

  std::vector<CrossbarConfig> crossbars() const {
    return layers.empty() ? std::vector<CrossbarConfig>{crossbar} : layers;
  }
};

// ---------------------------------------------------------------------------
// Config (de)serialization

inline std::string to_string(NoiseModel m) { return m == NoiseModel::pair ? "pair" : "single"; }
inline std::string to_string(Granularity g) { return g == Granularity::global ? "global" : "per-layer"; }
inline std::string to_string(BatchAggregate a) { return a == BatchAggregate::mean ? "mean" : "max"; }

inline Granularity parse_granularity(const std::string& s) {
  if (s == "global") return Granularity::global;
  if (s == "per-layer" || s == "per_layer") return Granularity::per_layer;
  throw ConfigError("granularity must be global or per-layer, got '" + s + "'");
}

inline BatchAggregate parse_batch_agg(const std::string& s) {
  if (s == "mean") return BatchAggregate::mean;
  if (s == "max") return BatchAggregate::max;
  throw ConfigError("aggregate must be mean or max, got '" + s + "'");
}

inline json crossbar_to_json(const CrossbarConfig& c) {
  json j{{"g_max", c.g_max}, {"levels", c.levels},    {"sigma_v", c.sigma_v},
         {"r", c.r},         {"quantize", c.quantize}, {"noise_model", to_string(c.noise_model)}};
  if (!c.sigma_table.empty()) j["sigma_table"] = c.sigma_table;
  return j;
}

inline CrossbarConfig crossbar_from_json(const json& j, CrossbarConfig c) {
  using detail::field;
  if (j.contains("g_max")) c.g_max = field<double>(j, "g_max");
  if (j.contains("levels")) c.levels = field<Index>(j, "levels");
  if (j.contains("N")) c.levels = field<Index>(j, "N");
  if (j.contains("sigma_v")) c.sigma_v = field<double>(j, "sigma_v");
  if (j.contains("r")) c.r = field<double>(j, "r");
  if (j.contains("quantize")) c.quantize = field<bool>(j, "quantize");
  if (j.contains("noise_model")) {
    const auto m = field<std::string>(j, "noise_model");
    if (m != "pair" && m != "single") throw ConfigError("noise_model must be pair or single");
    c.noise_model = m == "pair" ? NoiseModel::pair : NoiseModel::single;
  }
  if (j.contains("sigma_table")) c.sigma_table = field<std::vector<double>>(j, "sigma_table");
  c.validate();
  return c;
}

inline json to_json(const RunConfig& rc) {
  json j;
  j["network"] = rc.network.string();
  j["inputs"] = rc.inputs.string();
  j["crossbar"] = crossbar_to_json(rc.crossbar);
  if (!rc.layers.empty()) {
    j["layers"] = json::array();
    for (const auto& l : rc.layers) j["layers"].push_back(crossbar_to_json(l));
  }
  j["seed"] = rc.seed;
  j["agg"] = rc.agg_outputs + "," + rc.agg_inputs;
  j["coefficients"] = rc.coefficients;
  j["max_inputs"] = rc.max_inputs ? json(*rc.max_inputs) : json(nullptr);
  j["trials"] = rc.trials;
  j["clip"] = rc.clip;
  j["freeze_per_trial"] = rc.freeze_per_trial;
  j["record_moments"] = rc.record_moments;
  const auto& o = rc.optimize;
  json oj{{"budget", o.budget},
          {"granularity", to_string(o.granularity)},
          {"population", o.ga.population},
          {"generations", o.ga.generations},
          {"crossover_rate", o.ga.crossover_rate},
          {"mutation_scale", o.ga.mutation_scale},
          {"tournament", o.ga.tournament},
          {"sample", o.sample},
          {"batch_agg", to_string(o.batch_agg)},
          {"warm_start", o.warm_start}};
  oj["bounds"] = o.bounds ? json::array({o.bounds->first, o.bounds->second}) : json(nullptr);
  j["optimize"] = std::move(oj);
  return j;
}

inline void parse_agg(RunConfig& rc, const std::string& spec) {
  const auto comma = spec.find(',');
  rc.agg_outputs = spec.substr(0, comma);
  rc.agg_inputs = comma == std::string::npos ? rc.agg_outputs : spec.substr(comma + 1);
  for (const auto* a : {&rc.agg_outputs, &rc.agg_inputs})
    if (*a != "mean" && *a != "max") throw ConfigError("--agg takes mean|max[,mean|max], got '" + spec + "'");
}

// Relative paths in a config file resolve against the file's directory.
inline RunConfig from_json(const json& j, const fs::path& base_dir) {
  using detail::field;
  using detail::field_or;
  RunConfig rc;
  auto resolve = [&](const std::string& p) { return p.empty() ? fs::path() : fs::absolute(base_dir / p).lexically_normal(); };
  try {
    rc.network = resolve(field_or<std::string>(j, "network", ""));
    rc.inputs = resolve(field_or<std::string>(j, "inputs", ""));
    if (j.contains("output")) rc.output = resolve(field<std::string>(j, "output"));
    if (j.contains("crossbar")) rc.crossbar = crossbar_from_json(j["crossbar"], rc.crossbar);
    if (j.contains("layers"))
      for (const auto& l : j["layers"]) rc.layers.push_back(crossbar_from_json(l, rc.crossbar));
    rc.seed = field_or<std::uint64_t>(j, "seed", 0);
    parse_agg(rc, field_or<std::string>(j, "agg", "mean,mean"));
    rc.coefficients = field_or<bool>(j, "coefficients", false);
    if (j.contains("max_inputs") && !j["max_inputs"].is_null()) rc.max_inputs = field<std::size_t>(j, "max_inputs");
    rc.trials = field_or<std::size_t>(j, "trials", 200);
    rc.clip = field_or<bool>(j, "clip", false);
    rc.freeze_per_trial = field_or<bool>(j, "freeze_per_trial", false);
    rc.record_moments = field_or<bool>(j, "record_moments", false);
    if (j.contains("optimize")) {
      const json& o = j["optimize"];
      auto& s = rc.optimize;
      s.budget = field_or<double>(o, "budget", 0.0);
      s.granularity = parse_granularity(field_or<std::string>(o, "granularity", "global"));
      s.ga.population = field_or<std::size_t>(o, "population", 50);
      s.ga.generations = field_or<std::size_t>(o, "generations", 100);
      s.ga.crossover_rate = field_or<double>(o, "crossover_rate", 0.9);
      s.ga.mutation_scale = field_or<double>(o, "mutation_scale", 0.25);
      s.ga.tournament = field_or<std::size_t>(o, "tournament", 3);
      s.sample = field_or<std::size_t>(o, "sample", 100);
      s.batch_agg = parse_batch_agg(field_or<std::string>(o, "batch_agg", "mean"));
      s.warm_start = field_or<bool>(o, "warm_start", true);
      if (o.contains("bounds") && !o["bounds"].is_null()) {
        const auto b = field<std::vector<double>>(o, "bounds");
        if (b.size() != 2) throw ConfigError("optimize.bounds needs [lo, hi]");
        s.bounds = std::make_pair(b[0], b[1]);
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter(const fs::path& path, std::initializer_list<const char*> header) : out_(path, std::ios::trunc) {
    if (!out_) throw FormatError("cannot write " + path.string());
    bool first = true;
    for (const char* h : header) {
      out_ << (first ? "" : ",") << h;
      first = false;
    }
    out_ << '\n';
  }

  template <class... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double v) { return num(v); }
  static std::string cell(const std::string& s) { return s; }
  template <class T>
    requires std::is_integral_v<T>
  static std::string cell(T v) {
    return std::to_string(v);
  }
  std::ofstream out_;
};

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + " is not finite");
}

inline json report_header(const RunConfig& rc, const char* command) {
  return json{{"engine", std::string(kEngineName) + " " + kEngineVersion}, {"command", command}, {"config", to_json(rc)}};
}

inline double aggregate(const std::vector<double>& v, const std::string& how) {
  if (v.empty()) return 0.0;
  if (how == "max") return *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

struct Loaded {
  NetworkSpec spec;
  LoweredNetwork net;
  InputBatch batch;
};

inline Loaded load(const RunConfig& rc, bool need_inputs = true) {
  if (rc.network.empty()) throw ConfigError("no network given");
  Loaded l;
  l.spec = parse_network(rc.network);
  l.net = lower(l.spec);
  if (need_inputs) {
    if (rc.inputs.empty()) throw ConfigError("no inputs given");
    l.batch = parse_inputs(rc.inputs);
    if (l.batch.shape != l.net.input_shape)
      throw ShapeError("input shape " + to_string(l.batch.shape) + " does not match network " +
                       to_string(l.net.input_shape));
    if (rc.max_inputs && *rc.max_inputs < l.batch.size()) {
      l.batch.samples.resize(*rc.max_inputs);
      if (l.batch.labels) l.batch.labels->resize(*rc.max_inputs);
    }
  }
  return l;
}

inline void write_report(const RunConfig& rc, const json& report) {
  fs::create_directories(rc.output);
  detail::write_json(rc.output / "report.json", report);
}

inline void write_timing(const RunConfig& rc, const char* command, double seconds, json extra = json::object()) {
  extra["command"] = command;
  extra["wall_seconds"] = seconds;
  detail::write_json(rc.output / "timing.json", extra);
}

using Clock = std::chrono::steady_clock;
inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_predict(const RunConfig& rc, std::ostream& out) {
  const auto l = load(rc);
  const auto t0 = Clock::now();
  const ProgrammedNetwork prog(l.net, rc.crossbars());
  const std::size_t n = l.batch.size();
  std::vector<Prediction> preds(n);
  PredictOptions opts;
  opts.coefficients = rc.coefficients;
  parallel_for(n, rc.threads, [&](std::size_t i) { preds[i] = predict_network(prog, l.batch.samples[i], opts); });
  const double elapsed = seconds_since(t0);

  fs::create_directories(rc.output);
  json report = report_header(rc, "predict");
  std::vector<double> per_input_agg, means, maxes, powers;
  json per_input = json::array();
  std::size_t clamps = 0;
  std::vector<LayerPower> layer_mean(prog.layer_count());
  {
    CsvWriter csv(rc.output / "mse.csv", {"input", "output", "mse", "mean", "variance", "reference"});
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = preds[i];
      const Vector var = p.output.variance();
      for (Index j = 0; j < p.mse.per_output.size(); ++j)
        csv.row(i, static_cast<std::size_t>(j), p.mse.per_output[j], p.output.mean[j], var[j], p.output.ref[j]);
      require_finite(p.mse.mean, "predicted MSE");
      std::vector<double> outs(p.mse.per_output.data(), p.mse.per_output.data() + p.mse.per_output.size());
      per_input_agg.push_back(aggregate(outs, rc.agg_outputs));
      means.push_back(p.mse.mean);
      maxes.push_back(p.mse.max);
      powers.push_back(p.power.total());
      clamps += p.diagnostics.negative_variance_clamps;
      for (std::size_t k = 0; k < layer_mean.size(); ++k) {
        layer_mean[k].mem += p.power.layers[k].mem / static_cast<double>(n);
        layer_mean[k].tia_plus += p.power.layers[k].tia_plus / static_cast<double>(n);
        layer_mean[k].tia_minus += p.power.layers[k].tia_minus / static_cast<double>(n);
      }
      per_input.push_back({{"input", i}, {"mean_mse", p.mse.mean}, {"max_mse", p.mse.max}, {"power", p.power.total()}});
    }
  }
  if (rc.coefficients) {
    CsvWriter csv(rc.output / "coefficients.csv", {"input", "layer", "output", "F1", "F2", "F3"});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < preds[i].coefficients.size(); ++k) {
        const auto& c = preds[i].coefficients[k];
        for (Index j = 0; j < c.f1.size(); ++j) csv.row(i, k, static_cast<std::size_t>(j), c.f1[j], c.f2[j], c.f3[j]);
      }
  }
  json layers = json::array();
  for (const auto& lp : layer_mean)
    layers.push_back({{"mem", lp.mem}, {"tia_plus", lp.tia_plus}, {"tia_minus", lp.tia_minus}, {"total", lp.total()}});
  report["summary"] = {{"inputs", n},
                       {"outputs", l.net.output_size()},
                       {"agg", rc.agg_outputs + "," + rc.agg_inputs},
                       {"mse", aggregate(per_input_agg, rc.agg_inputs)},
                       {"mean_mse", aggregate(means, "mean")},
                       {"mean_max_mse", aggregate(maxes, "mean")},
                       {"max_max_mse", aggregate(maxes, "max")},
                       {"power", aggregate(powers, "mean")},
                       {"layer_power", std::move(layers)},
                       {"negative_variance_clamps", clamps}};
  report["per_input"] = std::move(per_input);
  report["files"] = {{"mse", "mse.csv"}, {"timing", "timing.json"}};
  if (rc.coefficients) report["files"]["coefficients"] = "coefficients.csv";
  write_report(rc, report);
  write_timing(rc, "predict", elapsed, {{"inputs", n}});
  out << "predict: " << n << " inputs, mse(" << rc.agg_outputs << "," << rc.agg_inputs
      << ") = " << num(report["summary"]["mse"].get<double>()) << ", " << elapsed << " s\n";
  return 0;
}

inline int cmd_simulate(const RunConfig& rc, std::ostream& out) {
  const auto l = load(rc);
  const auto t0 = Clock::now();
  const ProgrammedNetwork prog(l.net, rc.crossbars());
  TrialPlan plan;
  plan.trials = rc.trials;
  plan.master_seed = rc.seed;
  plan.clip_conductances = rc.clip;
  plan.freeze_per_trial = rc.freeze_per_trial;
  plan.record_moments = rc.record_moments;
  plan.threads = rc.threads;
  const auto est = estimate(prog, l.batch.samples, plan, l.batch.labels ? &*l.batch.labels : nullptr);
  const double elapsed = seconds_since(t0);

  fs::create_directories(rc.output);
  json report = report_header(rc, "simulate");
  std::vector<double> per_input_agg, means, maxes;
  json per_input = json::array();
  {
    CsvWriter csv(rc.output / "mse.csv", {"input", "output", "mse", "mse_se", "reference"});
    for (std::size_t i = 0; i < est.inputs.size(); ++i) {
      const auto& e = est.inputs[i];
      for (Index j = 0; j < e.mse.size(); ++j) csv.row(i, static_cast<std::size_t>(j), e.mse[j], e.mse_se[j], e.ref[j]);
      require_finite(e.mean_mse, "simulated MSE");
      std::vector<double> outs(e.mse.data(), e.mse.data() + e.mse.size());
      per_input_agg.push_back(aggregate(outs, rc.agg_outputs));
      means.push_back(e.mean_mse);
      maxes.push_back(e.max_mse);
      json pi{{"input", i},
              {"mean_mse", e.mean_mse},
              {"max_mse", e.max_mse},
              {"power", e.power_total},
              {"power_se", e.power_total_se}};
      if (e.accuracy) pi["accuracy"] = *e.accuracy;
      per_input.push_back(std::move(pi));
    }
  }
  if (rc.record_moments) {
    CsvWriter csv(rc.output / "moments.csv", {"input", "output", "mean", "mean_se", "variance"});
    for (std::size_t i = 0; i < est.inputs.size(); ++i) {
      const auto& e = est.inputs[i];
      for (Index j = 0; j < e.mean.size(); ++j)
        csv.row(i, static_cast<std::size_t>(j), e.mean[j], e.mean_se[j], e.cov(j, j));
    }
  }
  double mem_physical = 0.0;
  for (const auto& e : est.inputs)
    for (const auto& p : e.power) mem_physical += p.mem_physical / static_cast<double>(est.inputs.size());
  report["summary"] = {{"inputs", est.inputs.size()},
                       {"trials", est.trials},
                       {"clip", rc.clip},
                       {"freeze_per_trial", rc.freeze_per_trial},
                       {"agg", rc.agg_outputs + "," + rc.agg_inputs},
                       {"mse", aggregate(per_input_agg, rc.agg_inputs)},
                       {"mean_mse", est.mean_mse()},
                       {"mean_max_mse", est.mean_max_mse()},
                       {"max_max_mse", aggregate(maxes, "max")},
                       {"power", est.power_total()},
                       {"mem_power_physical", mem_physical}};
  if (auto acc = est.accuracy()) {
    double clean = 0.0;
    for (std::size_t b = 0; b < l.batch.size(); ++b)
      if (argmax(ideal_forward(prog, l.batch.samples[b])) == (*l.batch.labels)[b]) clean += 1.0;
    report["summary"]["accuracy"] = *acc;
    report["summary"]["clean_accuracy"] = clean / static_cast<double>(l.batch.size());
  }
  report["per_input"] = std::move(per_input);
  report["files"] = {{"mse", "mse.csv"}, {"timing", "timing.json"}};
  if (rc.record_moments) report["files"]["moments"] = "moments.csv";
  write_report(rc, report);
  write_timing(rc, "simulate", elapsed, {{"inputs", est.inputs.size()}, {"trials", est.trials}});
  out << "simulate: " << est.inputs.size() << " inputs x " << est.trials << " trials, mse(" << rc.agg_outputs << ","
      << rc.agg_inputs << ") = " << num(report["summary"]["mse"].get<double>()) << ", " << elapsed << " s\n";
  return 0;
}

inline int cmd_power(const RunConfig& rc, std::ostream& out) {
  const auto l = load(rc);
  const auto t0 = Clock::now();
  const ProgrammedNetwork prog(l.net, rc.crossbars());
  const std::size_t n = l.batch.size();
  std::vector<Prediction> preds(n);
  PredictOptions opts;
  opts.keep_states = rc.coefficients;
  parallel_for(n, rc.threads, [&](std::size_t i) { preds[i] = predict_network(prog, l.batch.samples[i], opts); });

  std::vector<LayerPower> mean(prog.layer_count());
  for (const auto& p : preds)
    for (std::size_t k = 0; k < mean.size(); ++k) {
      mean[k].mem += p.power.layers[k].mem / static_cast<double>(n);
      mean[k].tia_plus += p.power.layers[k].tia_plus / static_cast<double>(n);
      mean[k].tia_minus += p.power.layers[k].tia_minus / static_cast<double>(n);
    }
  fs::create_directories(rc.output);
  json report = report_header(rc, "power");
  json layers = json::array();
  double total = 0.0;
  {
    CsvWriter csv(rc.output / "power.csv", {"layer", "mem", "tia_plus", "tia_minus", "total"});
    for (std::size_t k = 0; k < mean.size(); ++k) {
      csv.row(k, mean[k].mem, mean[k].tia_plus, mean[k].tia_minus, mean[k].total());
      layers.push_back(
          {{"mem", mean[k].mem}, {"tia_plus", mean[k].tia_plus}, {"tia_minus", mean[k].tia_minus}, {"total", mean[k].total()}});
      total += mean[k].total();
    }
  }
  require_finite(total, "power");
  if (rc.coefficients) {
    // Coefficients are linear in the per-input moments, so batch means are exact.
    CsvWriter csv(rc.output / "power_coefficients.csv", {"layer", "column", "H1", "H2", "H3"});
    const auto& net = l.net;
    for (std::size_t k = 0; k < prog.layer_count(); ++k) {
      const std::size_t stage = prog.stage_of_layer(k);
      PowerPoly acc;
      for (std::size_t i = 0; i < n; ++i) {
        const MomentState in = stage == 0 ? MomentState::deterministic(l.batch.samples[i], net.input_shape)
                                          : preds[i].states[stage - 1];
        const auto poly = power_poly(prog.linear(k), in, prog.config(k));
        if (i == 0) acc = poly;
        else {
          acc.h1 += poly.h1;
          acc.h2 += poly.h2;
          acc.h3 += poly.h3;
        }
      }
      for (Index j = 0; j < acc.h1.size(); ++j)
        csv.row(k, static_cast<std::size_t>(j), acc.h1[j] / double(n), acc.h2[j] / double(n), acc.h3[j] / double(n));
    }
  }
  const double elapsed = seconds_since(t0);
  report["summary"] = {{"inputs", n}, {"total", total}, {"layers", std::move(layers)}};
  report["files"] = {{"power", "power.csv"}, {"timing", "timing.json"}};
  if (rc.coefficients) report["files"]["coefficients"] = "power_coefficients.csv";
  write_report(rc, report);
  write_timing(rc, "power", elapsed, {{"inputs", n}});
  out << "power: total " << num(total) << " W over " << prog.layer_count() << " layers\n";
  return 0;
}

inline OptProblem make_problem(const RunConfig& rc, const Loaded& l, Granularity g) {
  OptProblem p;
  p.network = &l.net;
  p.granularity = g;
  p.power_budget = rc.optimize.budget;
  const std::size_t take = std::min(rc.optimize.sample, l.batch.size());
  p.input_sample.assign(l.batch.samples.begin(), l.batch.samples.begin() + static_cast<std::ptrdiff_t>(take));
  p.base = rc.crossbar;
  const auto b = rc.optimize.bounds.value_or(default_bounds(rc.crossbar.sigma_v));
  p.lower = {b.first};
  p.upper = {b.second};
  p.ga = rc.optimize.ga;
  p.ga.seed = rc.seed;
  p.batch_agg = rc.optimize.batch_agg;
  p.threads = rc.threads;
  return p;
}

inline int cmd_optimize(const RunConfig& rc, std::ostream& out) {
  if (!(rc.optimize.budget > 0.0)) throw ConfigError("optimize needs a positive --budget");
  const auto l = load(rc);
  const auto t0 = Clock::now();
  json report = report_header(rc, "optimize");
  OptProblem problem = make_problem(rc, l, rc.optimize.granularity);
  if (rc.optimize.granularity == Granularity::per_layer && rc.optimize.warm_start) {
    const auto global = optimize(make_problem(rc, l, Granularity::global));
    problem.initial_guesses.push_back(global.g_max);
    report["warm_start"] = {{"g_max", global.g_max[0]}, {"max_mse", global.max_mse}, {"power", global.power}};
  }
  const auto res = optimize(problem);
  const double elapsed = seconds_since(t0);
  fs::create_directories(rc.output);
  {
    CsvWriter csv(rc.output / "history.csv", {"generation", "has_feasible", "best_objective", "feasible_fraction"});
    for (const auto& h : res.history)
      csv.row(h.generation, static_cast<int>(h.has_feasible), h.best_objective, h.feasible_fraction);
  }
  report["result"] = {{"g_max", res.g_max},
                      {"max_mse", res.max_mse},
                      {"power", res.power},
                      {"budget", rc.optimize.budget},
                      {"granularity", to_string(rc.optimize.granularity)},
                      {"evaluations", res.evaluations},
                      {"sample", problem.input_sample.size()}};
  report["files"] = {{"history", "history.csv"}, {"timing", "timing.json"}};
  write_report(rc, report);
  write_timing(rc, "optimize", elapsed, {{"evaluations", res.evaluations}});
  out << "optimize: max-MSE " << num(res.max_mse) << " at power " << num(res.power) << " (budget "
      << num(rc.optimize.budget) << "), " << elapsed << " s\n";
  return 0;
}

inline int cmd_lower(const RunConfig& rc, std::ostream& out) {
  const auto l = load(rc, false);
  json stages = json::array();
  for (const auto& st : l.net.stages) {
    if (const auto* lin = std::get_if<LinearStage>(&st))
      stages.push_back({{"kind", "linear"},
                        {"in", lin->weights.cols()},
                        {"out", lin->weights.rows()},
                        {"devices", lin->weights.nnz()},
                        {"w_max", lin->w_max},
                        {"bias", lin->bias.size() != 0},
                        {"out_shape", to_string(lin->out_shape)}});
    else if (const auto* a = std::get_if<ActivationStage>(&st))
      stages.push_back({{"kind", "activation"}, {"activation", std::string(to_string(a->kind))}, {"size", a->shape.size()}});
    else {
      const auto& p = std::get<PoolStage>(st);
      stages.push_back({{"kind", "pool"},
                        {"window", p.window},
                        {"in", p.in_shape.size()},
                        {"out", p.out_shape.size()},
                        {"out_shape", to_string(p.out_shape)}});
    }
  }
  json report = report_header(rc, "lower");
  report["summary"] = {{"input_shape", to_string(l.net.input_shape)},
                       {"output_size", l.net.output_size()},
                       {"linear_stages", l.net.linear_count()},
                       {"stages", std::move(stages)}};
  write_report(rc, report);
  out << report["summary"].dump(2) << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"memse: MSE and power prediction for noisy memristor crossbar DNNs"};
  app.require_subcommand(1);
  std::string config_path, out_dir, agg, granularity, network, inputs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials;
  std::optional<double> budget;
  int threads = 0;
  bool clip = false, no_quant = false, freeze = false, coefficients = false;

  for (const char* name : {"predict", "simulate", "power", "optimize", "lower"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "run config (JSON)")->required();
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--threads", threads, "worker threads (default: MEMSE_THREADS or all cores)");
    sub->add_option("--agg", agg, "MSE aggregation: outputs[,inputs], each mean|max");
    sub->add_option("--trials", trials, "Monte-Carlo trials");
    sub->add_option("--budget", budget, "power budget (W)");
    sub->add_option("--granularity", granularity, "global|per-layer");
    sub->add_flag("--clip", clip, "clip sampled conductances to [0, G_max]");
    sub->add_flag("--no-quant", no_quant, "disable conductance quantization");
    sub->add_flag("--freeze-per-trial", freeze, "one conductance draw per trial for the whole batch");
    sub->add_flag("--coefficients", coefficients, "emit per-layer F (predict) or H (power) coefficients");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--network", network, "network manifest (overrides config)");
    sub->add_option("--inputs", inputs, "input manifest (overrides config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::config);
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const fs::path cfg_path = fs::absolute(config_path);
    RunConfig rc = from_json(detail::read_json(cfg_path), cfg_path.parent_path());
    if (seed) rc.seed = *seed;
    if (!agg.empty()) parse_agg(rc, agg);
    if (trials) rc.trials = *trials;
    if (budget) rc.optimize.budget = *budget;
    if (!granularity.empty()) rc.optimize.granularity = parse_granularity(granularity);
    if (clip) rc.clip = true;
    if (freeze) rc.freeze_per_trial = true;
    if (coefficients) rc.coefficients = true;
    if (no_quant) {
      rc.crossbar.quantize = false;
      for (auto& l : rc.layers) l.quantize = false;
    }
    if (!out_dir.empty()) rc.output = fs::absolute(out_dir);
    if (!network.empty()) rc.network = fs::absolute(network);
    if (!inputs.empty()) rc.inputs = fs::absolute(inputs);
    rc.threads = resolve_threads(threads);
    if (rc.trials < 1) throw ConfigError("--trials must be >= 1");

    if (command == "predict") return cmd_predict(rc, out);
    if (command == "simulate") return cmd_simulate(rc, out);
    if (command == "power") return cmd_power(rc, out);
    if (command == "optimize") return cmd_optimize(rc, out);
    return cmd_lower(rc, out);
  } catch (const Error& e) {
    err << "memse " << command << ": " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "memse " << command << ": " << e.what() << '\n';
    return static_cast<int>(ErrorKind::config);
  } catch (const std::exception& e) {
    err << "memse " << command << ": " << e.what() << '\n';
    return static_cast<int>(ErrorKind::numeric);
  }
}

}  // namespace memse::cli
