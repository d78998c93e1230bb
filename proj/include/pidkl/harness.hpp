#pragma once

// Experiment presets, evaluation reports and the end-to-end comparison of
// SKL, DKL and PI-DKL on the synthetic benchmarks.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidkl/data.hpp"
#include "pidkl/fd_solvers.hpp"
#include "pidkl/physics.hpp"
#include "pidkl/training.hpp"

namespace pidkl {

/// Solved problem, its split and the metadata written next to the CSVs.
struct GeneratedData {
  Dataset all;
  DatasetSplit split;
  nlohmann::json metadata;
};

struct ExperimentPreset {
  std::string name;
  OperatorSpec op;
  SplitSpec split;
  TrainConfig defaults;
  double pidkl_rmse_threshold = 0.0;
  std::function<GeneratedData()> generate;
};

/// ∂f/∂t + B·f − D
inline OperatorSpec ode_operator() {
  OperatorSpec op;
  op.terms.push_back({CoeffRef::fixed(1.0), {{0, 1}}});
  op.terms.push_back({CoeffRef::named("B"), {{0, 0}}});
  op.constant = CoeffRef::named("D", true);
  return op;
}

/// ∂f/∂t − α ∂²f/∂x² over inputs (x, t).
inline OperatorSpec diffusion_operator() {
  OperatorSpec op;
  op.terms.push_back({CoeffRef::fixed(1.0), {{1, 1}}});
  op.terms.push_back({CoeffRef::named("alpha", true), {{0, 2}}});
  return op;
}

inline GeneratedData generate_ode(const OdeProblem& p, const SplitSpec& split) {
  GeneratedData g;
  g.all = to_dataset(solve_ode(p));
  g.split = export_dataset(g.all, split);
  g.metadata = metadata(p, g.split, split);
  return g;
}

inline GeneratedData generate_diffusion(const DiffusionProblem& p, const SplitSpec& split) {
  GeneratedData g;
  const DiffusionSolution sol = solve_diffusion(p);
  g.all = to_dataset(sol);
  g.split = export_dataset(g.all, split);
  g.metadata = metadata(p, sol, g.split, split);
  return g;
}

inline std::vector<std::string> preset_names() { return {"ode1st", "diffusion1d"}; }

inline ExperimentPreset preset(const std::string& name) {
  ExperimentPreset p;
  p.name = name;
  if (name == "ode1st") {
    p.op = ode_operator();
    p.split = SplitSpec::parse("ode-extrapolation");
    p.defaults.domain = {{0.0, 1.0}};
    p.defaults.coefficients = {{"B", 1.0, false}, {"D", 1.0, false}};
    p.pidkl_rmse_threshold = 0.10;
    p.generate = [split = p.split] { return generate_ode(ode_benchmark(), split); };
    return p;
  }
  if (name == "diffusion1d") {
    p.op = diffusion_operator();
    p.split = SplitSpec::parse("diffusion-slice");
    p.defaults.domain = {{0.0, 1.0}, {0.0, 1.0}};
    p.defaults.coefficients = {{"alpha", 1.0, true}};
    p.pidkl_rmse_threshold = 0.11;
    p.generate = [split = p.split] { return generate_diffusion(diffusion_benchmark(), split); };
    return p;
  }
  std::string valid;
  for (const auto& n : preset_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ValidationError("unknown preset '" + name + "' (valid presets: " + valid + ")");
}

// ---------------------------------------------------------------------------
// Problem files for `generate`

/// {"type": "ode", "B", "D", "f0", "g": "zero"|"benchmark", "n_points", "split"}
/// {"type": "diffusion", "alpha", "init": "square_wave"|{"constant": c}, "nx", "nt", "split"}
/// "split" is a split name or {"train": [...], "test": [...]}.
inline GeneratedData generate_from_problem(const nlohmann::json& j) {
  try {
    if (!j.is_object() || !j.contains("type")) throw ParseError("problem: missing 'type'");
    SplitSpec split;
    if (!j.contains("split")) throw ParseError("problem: missing 'split'");
    if (j["split"].is_string()) {
      split = SplitSpec::parse(j["split"].get<std::string>());
    } else {
      detail::reject_unknown_keys(j["split"], {"train", "test"}, "problem.split");
      split.kind = SplitSpec::Kind::custom;
      split.train = j["split"].at("train").get<std::vector<std::size_t>>();
      if (j["split"].contains("test")) split.test = j["split"]["test"].get<std::vector<std::size_t>>();
    }
    const auto type = j["type"].get<std::string>();
    if (type == "ode") {
      detail::reject_unknown_keys(j, {"type", "B", "D", "f0", "g", "n_points", "refinement", "split"}, "problem");
      OdeProblem p;
      p.B = j.value("B", p.B);
      p.D = j.value("D", p.D);
      p.f0 = j.value("f0", p.f0);
      p.n_points = j.value("n_points", p.n_points);
      p.refinement = j.value("refinement", p.refinement);
      const auto g = j.value("g", std::string("zero"));
      if (g == "benchmark") {
        p.g = ode_benchmark_source;
        p.g_label = "sin(2*pi*t)*exp(-t)";
      } else if (g != "zero") {
        throw ParseError("problem: g must be 'zero' or 'benchmark'");
      }
      return generate_ode(p, split);
    }
    if (type == "diffusion") {
      detail::reject_unknown_keys(j, {"type", "alpha", "init", "nx", "nt", "refine_x", "refine_t", "split"}, "problem");
      DiffusionProblem p = diffusion_benchmark();
      p.alpha = j.value("alpha", p.alpha);
      p.nx = j.value("nx", p.nx);
      p.nt = j.value("nt", p.nt);
      p.refine_x = j.value("refine_x", p.refine_x);
      p.refine_t = j.value("refine_t", p.refine_t);
      if (j.contains("init")) {
        if (j["init"].is_string()) {
          if (j["init"].get<std::string>() != "square_wave") throw ParseError("problem: init must be 'square_wave'");
        } else {
          detail::reject_unknown_keys(j["init"], {"constant"}, "problem.init");
          const double c = j["init"].at("constant").get<double>();
          p.init = [c](double) { return c; };
          p.init_label = "constant " + format_double(c);
        }
      }
      return generate_diffusion(p, split);
    }
    throw ParseError("problem: type must be 'ode' or 'diffusion'");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("problem: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalReport {
  std::size_t n = 0;
  double rmse = 0.0;
  std::optional<double> nrmse;  // absent when the test mean is ≈ 0
  double test_ll = 0.0;
  double mean_std = 0.0;       // latent f
  double std_max_min_ratio = 0.0;
};

/// Metrics from predictions alone. `var_obs` is the observation-level
/// variance v(x*) + τ⁻¹, `std_f` the latent standard deviation.
inline EvalReport evaluate_predictions(std::span<const double> y, std::span<const double> mu,
                                       std::span<const double> var_obs, std::span<const double> std_f) {
  require_dims(mu.size(), y.size(), "evaluate predictions");
  require_dims(var_obs.size(), y.size(), "evaluate variances");
  require_dims(std_f.size(), y.size(), "evaluate latent std");
  if (y.empty()) throw InsufficientData("evaluate: no test points");
  EvalReport r;
  r.n = y.size();
  double se = 0.0;
  double ysum = 0.0;
  double ll = 0.0;
  double smax = 0.0;
  double smin = std::numeric_limits<double>::infinity();
  double ssum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double e = y[i] - mu[i];
    se += e * e;
    ysum += y[i];
    if (!(var_obs[i] > 0.0)) throw ValidationError("evaluate: predictive variance must be > 0");
    ll += -0.5 * (std::log(2.0 * std::numbers::pi * var_obs[i]) + e * e / var_obs[i]);
    ssum += std_f[i];
    smax = std::max(smax, std_f[i]);
    smin = std::min(smin, std_f[i]);
  }
  const double n = static_cast<double>(y.size());
  r.rmse = std::sqrt(se / n);
  const double ymean = ysum / n;
  if (std::abs(ymean) > 1e-12) r.nrmse = r.rmse / ymean;
  r.test_ll = ll;
  r.mean_std = ssum / n;
  r.std_max_min_ratio = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  return r;
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["n"] = r.n;
  j["rmse"] = r.rmse;
  j["nrmse"] = r.nrmse ? nlohmann::json(*r.nrmse) : nlohmann::json(nullptr);
  j["test_ll"] = r.test_ll;
  j["mean_std"] = r.mean_std;
  j["std_max_min_ratio"] = std::isfinite(r.std_max_min_ratio) ? nlohmann::json(r.std_max_min_ratio) : nlohmann::json(nullptr);
  return j;
}

/// Per-point predictions in raw units: mean, observation std and latent std.
struct PredictionTable {
  Matrix<double> x;
  std::vector<double> y_true;
  std::vector<double> mu;
  std::vector<double> std;    // √(max(v, 1e-10) + τ⁻¹)
  std::vector<double> std_f;  // √max(v, 1e-10)

  [[nodiscard]] EvalReport report() const {
    std::vector<double> var_obs(std.size());
    for (std::size_t i = 0; i < std.size(); ++i) var_obs[i] = std[i] * std[i];
    return evaluate_predictions(y_true, mu, var_obs, std_f);
  }
};

inline PredictionTable predict_table(const PreparedData& train, const ModelParams<double>& p, const Dataset& test) {
  require_dims(test.dim(), train.dim(), "test inputs");
  const PredictiveMoments pm = predict(train, p, test.x);
  PredictionTable t;
  t.x = test.x;
  t.y_true = test.y;
  t.mu = pm.mean;
  for (double v : pm.variance) {
    const double vf = std::max(v, kSqrtFloor);
    t.std_f.push_back(std::sqrt(vf));
    t.std.push_back(std::sqrt(vf + pm.noise_variance));
  }
  return t;
}

inline void write_predictions_csv(const PredictionTable& t, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (std::size_t k = 0; k < t.x.cols(); ++k) out << "x_" << k << ',';
  out << "y_true,mu,std,std_f\n";
  for (std::size_t i = 0; i < t.y_true.size(); ++i) {
    for (std::size_t k = 0; k < t.x.cols(); ++k) out << format_double(t.x(i, k)) << ',';
    out << format_double(t.y_true[i]) << ',' << format_double(t.mu[i]) << ',' << format_double(t.std[i]) << ','
        << format_double(t.std_f[i]) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

inline PredictionTable read_predictions_csv(const std::string& path) {
  const CsvTable csv = read_csv_table(path);
  const std::size_t cy = csv.column("y_true");
  const std::size_t cm = csv.column("mu");
  const std::size_t cs = csv.column("std");
  const std::size_t cf = csv.column("std_f");
  std::size_t d = 0;
  while (d < csv.header.size() && csv.header[d] == "x_" + std::to_string(d)) ++d;
  PredictionTable t;
  t.x = Matrix<double>(csv.rows.size(), d);
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& r = csv.rows[i];
    for (std::size_t k = 0; k < d; ++k) t.x(i, k) = r[k];
    t.y_true.push_back(r[cy]);
    t.mu.push_back(r[cm]);
    t.std.push_back(r[cs]);
    t.std_f.push_back(r[cf]);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Trained models from checkpoints

inline Checkpoint make_checkpoint(const Dataset& train, const std::optional<OperatorSpec>& op, const TrainConfig& cfg,
                                  const TrainResult& r) {
  Checkpoint c;
  c.config = cfg;
  c.op = op;
  c.params = r.params;
  c.optimizer = r.optimizer;
  c.rng_state = r.rng_state;
  c.train = train;
  return c;
}

inline PredictionTable evaluate_checkpoint(const Checkpoint& c, const Dataset& test) {
  const PreparedData prepared = PreparedData::from(c.train);
  return predict_table(prepared, c.params, test);
}

// ---------------------------------------------------------------------------
// Reproduction of the synthetic comparisons

struct MethodRun {
  Mode mode = Mode::pidkl;
  TrainConfig config;
  TrainResult result;
  PredictionTable predictions;
  EvalReport report;
};

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ReproduceResult {
  std::string preset;
  GeneratedData data;
  std::vector<MethodRun> runs;
  std::vector<Check> checks;

  [[nodiscard]] const MethodRun& run(Mode m) const {
    for (const auto& r : runs) {
      if (r.mode == m) return r;
    }
    throw ValidationError("reproduce: mode not run");
  }
  [[nodiscard]] bool pass() const {
    for (const auto& c : checks) {
      if (!c.pass) return false;
    }
    return true;
  }
};

struct ReproduceOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<double> gamma;
  std::optional<std::size_t> m;
  std::ostream* log = nullptr;  // progress lines
};

inline std::string method_label(Mode m) {
  switch (m) {
    case Mode::skl: return "SKL";
    case Mode::dkl: return "DKL";
    case Mode::pidkl: return "PI-DKL";
  }
  return "?";
}

inline std::vector<Check> acceptance_checks(const std::string& preset_name, const ReproduceResult& r,
                                            double threshold) {
  const double skl = r.run(Mode::skl).report.rmse;
  const double dkl = r.run(Mode::dkl).report.rmse;
  const double pi = r.run(Mode::pidkl).report.rmse;
  auto fmt = [](double v) { return format_double(v); };
  std::vector<Check> out;
  out.push_back({"rmse_pidkl_le_" + fmt(threshold), pi <= threshold, "PI-DKL " + fmt(pi)});
  if (preset_name == "ode1st") {
    out.push_back({"rmse_pidkl_le_half_dkl", pi <= 0.5 * dkl, "PI-DKL " + fmt(pi) + ", DKL " + fmt(dkl)});
    out.push_back({"rmse_dkl_le_skl_plus_0.05", dkl <= skl + 0.05, "DKL " + fmt(dkl) + ", SKL " + fmt(skl)});
  } else {
    out.push_back({"rmse_pidkl_lt_dkl_lt_skl", pi < dkl && dkl < skl,
                   "PI-DKL " + fmt(pi) + ", DKL " + fmt(dkl) + ", SKL " + fmt(skl)});
    const auto& rp = r.run(Mode::pidkl).report;
    const auto& rd = r.run(Mode::dkl).report;
    out.push_back({"mean_std_pidkl_lt_dkl", rp.mean_std < rd.mean_std,
                   "PI-DKL " + fmt(rp.mean_std) + ", DKL " + fmt(rd.mean_std)});
    out.push_back({"std_ratio_pidkl_lt_dkl", rp.std_max_min_ratio < rd.std_max_min_ratio,
                   "PI-DKL " + fmt(rp.std_max_min_ratio) + ", DKL " + fmt(rd.std_max_min_ratio)});
  }
  return out;
}

/// Trains SKL, DKL and PI-DKL on the preset's split with shared settings and
/// scores each on the test split.
inline ReproduceResult reproduce(const std::string& name, const ReproduceOptions& opts = {}) {
  const ExperimentPreset ps = preset(name);
  ReproduceResult out;
  out.preset = name;
  out.data = ps.generate();
  const PreparedData prepared = PreparedData::from(out.data.split.train);
  for (Mode mode : {Mode::skl, Mode::dkl, Mode::pidkl}) {
    TrainConfig cfg = ps.defaults;
    cfg.mode = mode;
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.epochs) cfg.epochs = *opts.epochs;
    if (opts.gamma) cfg.gamma = *opts.gamma;
    if (opts.m) cfg.m = *opts.m;
    cfg.validate();
    MethodRun run;
    run.mode = mode;
    run.config = cfg;
    ProgressFn progress;
    if (opts.log != nullptr) {
      progress = [&, mode](std::size_t epoch, double value) {
        if ((epoch + 1) % 1000 == 0) {
          *opts.log << name << ' ' << method_label(mode) << " epoch " << (epoch + 1) << " objective " << value << '\n';
        }
      };
    }
    run.result = train(prepared, &ps.op, cfg, progress);
    run.predictions = predict_table(prepared, run.result.params, out.data.split.test);
    run.report = run.predictions.report();
    out.runs.push_back(std::move(run));
  }
  out.checks = acceptance_checks(name, out, ps.pidkl_rmse_threshold);
  return out;
}

inline nlohmann::json to_json(const ReproduceResult& r) {
  nlohmann::json j;
  j["preset"] = r.preset;
  j["rows"] = nlohmann::json::array();
  for (const auto& run : r.runs) {
    nlohmann::json row = to_json(run.report);
    row["method"] = method_label(run.mode);
    row["seed"] = run.config.seed;
    row["epochs"] = run.config.epochs;
    row["gamma"] = run.config.effective_gamma();
    row["final_objective"] = run.result.trace.empty() ? nlohmann::json(nullptr) : nlohmann::json(run.result.trace.back());
    nlohmann::json coeffs = nlohmann::json::object();
    if (run.mode == Mode::pidkl) {
      for (const auto& c : run.result.params.eq_coeffs) coeffs[c.name] = c.value();
    }
    row["coefficients"] = coeffs;
    j["rows"].push_back(row);
  }
  j["LFM"] = "not implemented (requires Green's-function kernels)";
  j["checks"] = nlohmann::json::array();
  for (const auto& c : r.checks) j["checks"].push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
  j["pass"] = r.pass();
  return j;
}

}  // namespace pidkl
