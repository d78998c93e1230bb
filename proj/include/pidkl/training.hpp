#pragma once

// Stochastic collapsed ELBO, ADAM, the training loop, γ cross-validation and
// checkpoints.
//
// RNG order: one mt19937_64 seeded with config.seed draws the MLP weights at
// initialization, then per epoch, for each of the mc_samples draws, the m×d
// virtual inputs (row-major) followed by ε. When the effective γ is 0 the
// virtual draws are skipped entirely, so the generator is consumed exactly as
// in plain deep kernel learning.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidkl/autodiff.hpp"
#include "pidkl/data.hpp"
#include "pidkl/gp.hpp"
#include "pidkl/params.hpp"
#include "pidkl/physics.hpp"

namespace pidkl {

using Rng = std::mt19937_64;

enum class Mode { skl, dkl, pidkl };
enum class CvMetric { rmse, loglik };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::skl: return "skl";
    case Mode::dkl: return "dkl";
    case Mode::pidkl: return "pidkl";
  }
  return "?";
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "skl") return Mode::skl;
  if (s == "dkl") return Mode::dkl;
  if (s == "pidkl") return Mode::pidkl;
  throw ValidationError("unknown mode '" + s + "' (expected skl, dkl or pidkl)");
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

/// Initial value and parameterization of an unknown equation coefficient.
struct CoeffDecl {
  std::string name;
  double init = 1.0;
  bool positive = false;
  bool operator==(const CoeffDecl&) const = default;
};

struct TrainConfig {
  Mode mode = Mode::pidkl;
  double gamma = 1.0;
  std::size_t m = 10;
  VirtualInputSampler::Kind sampler = VirtualInputSampler::Kind::uniform_box;
  std::size_t epochs = 10000;
  AdamConfig adam;
  std::uint64_t seed = 0;
  std::vector<double> gamma_grid;
  std::size_t cv_folds = 5;
  CvMetric cv_metric = CvMetric::rmse;
  std::size_t mc_samples = 1;
  std::vector<std::size_t> mlp_widths = default_mlp_widths();
  std::vector<CoeffDecl> coefficients;
  std::vector<Interval> domain;  // empty: the training data's bounds

  bool operator==(const TrainConfig&) const = default;

  [[nodiscard]] double effective_gamma() const { return mode == Mode::pidkl ? gamma : 0.0; }
  [[nodiscard]] KernelKind kernel_kind() const { return mode == Mode::skl ? KernelKind::shallow : KernelKind::deep; }

  void validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("config: gamma must be finite and >= 0");
    if (m < 1) throw ValidationError("config: m must be >= 1");
    if (epochs < 1) throw ValidationError("config: epochs must be >= 1");
    if (mc_samples < 1) throw ValidationError("config: mc_samples must be >= 1");
    if (cv_folds < 2) throw ValidationError("config: cv_folds must be >= 2");
    if (!(adam.lr > 0.0) || !(adam.epsilon > 0.0)) throw ValidationError("config: adam lr and epsilon must be > 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
      throw ValidationError("config: adam betas must lie in [0, 1)");
    }
    for (double g : gamma_grid) {
      if (!(g >= 0.0) || !std::isfinite(g)) throw ValidationError("config: gamma_grid entries must be >= 0");
    }
    if (mlp_widths.empty()) throw ValidationError("config: mlp_widths must be non-empty");
    for (auto w : mlp_widths) {
      if (w == 0) throw ValidationError("config: mlp_widths entries must be positive");
    }
    for (const auto& c : coefficients) {
      if (c.name.empty()) throw ValidationError("config: coefficient needs a name");
      if (c.positive && !(c.init > 0.0)) throw ValidationError("config: positive coefficient '" + c.name + "' needs init > 0");
    }
    for (const auto& b : domain) {
      if (!(b.lo < b.hi)) throw ValidationError("config: domain intervals need lo < hi");
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                                const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ParseError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_as(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("config: bad value for '" + key + "': " + e.what());
  }
}

inline std::size_t get_count(const nlohmann::json& j, const std::string& key) {
  if (!j.at(key).is_number_unsigned()) throw ParseError("config: '" + key + "' must be a non-negative integer");
  return j.at(key).get<std::size_t>();
}

}  // namespace detail

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["mode"] = to_string(c.mode);
  j["gamma"] = c.gamma;
  j["m"] = c.m;
  j["sampler"] = c.sampler == VirtualInputSampler::Kind::uniform_box ? "uniform_box" : "standard_normal";
  j["epochs"] = c.epochs;
  j["adam"] = {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"epsilon", c.adam.epsilon}};
  j["seed"] = c.seed;
  j["gamma_grid"] = c.gamma_grid;
  j["cv_folds"] = c.cv_folds;
  j["cv_metric"] = c.cv_metric == CvMetric::rmse ? "rmse" : "loglik";
  j["mc_samples"] = c.mc_samples;
  j["mlp_widths"] = c.mlp_widths;
  j["coefficients"] = nlohmann::json::array();
  for (const auto& d : c.coefficients) {
    j["coefficients"].push_back({{"name", d.name}, {"init", d.init}, {"positive", d.positive}});
  }
  j["domain"] = nlohmann::json::array();
  for (const auto& b : c.domain) j["domain"].push_back({b.lo, b.hi});
  return j;
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are rejected.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  using detail::get_as;
  using detail::get_count;
  detail::reject_unknown_keys(j,
                              {"mode", "gamma", "m", "sampler", "epochs", "adam", "seed", "gamma_grid", "cv_folds",
                               "cv_metric", "mc_samples", "mlp_widths", "coefficients", "domain"},
                              "config");
  TrainConfig c = std::move(base);
  if (j.contains("mode")) c.mode = mode_from_string(get_as<std::string>(j, "mode"));
  if (j.contains("gamma")) c.gamma = get_as<double>(j, "gamma");
  if (j.contains("m")) c.m = get_count(j, "m");
  if (j.contains("sampler")) {
    const auto s = get_as<std::string>(j, "sampler");
    if (s == "uniform_box") {
      c.sampler = VirtualInputSampler::Kind::uniform_box;
    } else if (s == "standard_normal") {
      c.sampler = VirtualInputSampler::Kind::standard_normal;
    } else {
      throw ParseError("config: sampler must be 'uniform_box' or 'standard_normal'");
    }
  }
  if (j.contains("epochs")) c.epochs = get_count(j, "epochs");
  if (j.contains("adam")) {
    const auto& a = j["adam"];
    detail::reject_unknown_keys(a, {"lr", "beta1", "beta2", "epsilon"}, "config.adam");
    if (a.contains("lr")) c.adam.lr = get_as<double>(a, "lr");
    if (a.contains("beta1")) c.adam.beta1 = get_as<double>(a, "beta1");
    if (a.contains("beta2")) c.adam.beta2 = get_as<double>(a, "beta2");
    if (a.contains("epsilon")) c.adam.epsilon = get_as<double>(a, "epsilon");
  }
  if (j.contains("seed")) c.seed = get_as<std::uint64_t>(j, "seed");
  if (j.contains("gamma_grid")) c.gamma_grid = get_as<std::vector<double>>(j, "gamma_grid");
  if (j.contains("cv_folds")) c.cv_folds = get_count(j, "cv_folds");
  if (j.contains("cv_metric")) {
    const auto s = get_as<std::string>(j, "cv_metric");
    if (s == "rmse") {
      c.cv_metric = CvMetric::rmse;
    } else if (s == "loglik") {
      c.cv_metric = CvMetric::loglik;
    } else {
      throw ParseError("config: cv_metric must be 'rmse' or 'loglik'");
    }
  }
  if (j.contains("mc_samples")) c.mc_samples = get_count(j, "mc_samples");
  if (j.contains("mlp_widths")) c.mlp_widths = get_as<std::vector<std::size_t>>(j, "mlp_widths");
  if (j.contains("coefficients")) {
    if (!j["coefficients"].is_array()) throw ParseError("config: coefficients must be an array");
    c.coefficients.clear();
    for (const auto& e : j["coefficients"]) {
      detail::reject_unknown_keys(e, {"name", "init", "positive"}, "config.coefficients");
      CoeffDecl d;
      d.name = get_as<std::string>(e, "name");
      if (e.contains("init")) d.init = get_as<double>(e, "init");
      if (e.contains("positive")) d.positive = get_as<bool>(e, "positive");
      c.coefficients.push_back(d);
    }
  }
  if (j.contains("domain")) {
    if (!j["domain"].is_array()) throw ParseError("config: domain must be an array of [lo, hi]");
    c.domain.clear();
    for (const auto& e : j["domain"]) {
      if (!e.is_array() || e.size() != 2) throw ParseError("config: domain entries must be [lo, hi]");
      c.domain.push_back({e[0].get<double>(), e[1].get<double>()});
    }
  }
  c.validate();
  return c;
}

inline TrainConfig parse_config(const std::string& text, TrainConfig base = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return config_from_json(j, std::move(base));
}

// ---------------------------------------------------------------------------
// Initialization

/// Initial parameters. Only the MLP weights consume randomness.
///   signal variance   1
///   noise variance    0.01·var(y)
///   deep lengthscale  η = 1 on the MLP output; ARD η_k = 1 on standardized inputs
///   source kernel     η_k = 0.1·width_k² in raw units, σκ² = 1
inline ModelParams<double> init_params(const PreparedData& data, const OperatorSpec* op, const TrainConfig& cfg,
                                       Rng& rng) {
  const std::size_t d = data.dim();
  double var_y = 0.0;
  for (double v : data.y_centered) var_y += v * v;
  var_y /= static_cast<double>(data.size());
  if (!(var_y > 1e-12)) var_y = 1.0;

  ModelParams<double> p;
  p.kind = cfg.kernel_kind();
  if (p.kind == KernelKind::deep) {
    p.mlp = make_mlp(d, cfg.mlp_widths, rng);
    p.base.log_lengthscale = 0.0;
    p.base.log_signal_variance = 0.0;
  } else {
    p.ard.log_lengthscales.assign(d, 0.0);
    p.ard.log_signal_variance = 0.0;
  }
  const auto& bounds = cfg.domain.empty() ? data.raw.bounds : cfg.domain;
  require_dims(bounds.size(), d, "init_params domain");
  p.source.log_lengthscales.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double w = bounds[k].hi - bounds[k].lo;
    p.source.log_lengthscales[k] = std::log(0.1 * w * w);
  }
  p.source.log_signal_variance = 0.0;
  p.log_tau = -std::log(0.01 * var_y);
  if (op != nullptr) {
    for (const auto& name : op->coefficient_names()) {
      CoeffDecl decl{name, 1.0, false};
      for (const auto& c : cfg.coefficients) {
        if (c.name == name) decl = c;
      }
      p.eq_coeffs.push_back({name, decl.positive ? std::log(decl.init) : decl.init, decl.positive});
    }
    op->validate(d, p);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Objective

/// One Monte Carlo draw of the virtual inputs (raw coordinates) and ε.
struct VirtualDraw {
  Matrix<double> z_raw;
  double eps = 0.0;
};

inline VirtualInputSampler make_sampler(const PreparedData& data, const TrainConfig& cfg) {
  VirtualInputSampler s;
  s.kind = cfg.sampler;
  s.bounds = cfg.domain.empty() ? data.raw.bounds : cfg.domain;
  s.dim = data.dim();
  s.m = cfg.m;
  return s;
}

inline VirtualDraw draw_virtual(const VirtualInputSampler& s, const Standardizer& standardizer, Rng& rng) {
  VirtualDraw d;
  d.z_raw = virtual_inputs_to_raw(s, sample_virtual_inputs(s, rng), standardizer);
  std::normal_distribution<double> n(0.0, 1.0);
  d.eps = n(rng);
  return d;
}

/// L̃ = log N(y | 0, K + τ⁻¹I) + γ·mean_s log N(h(Z_s, ε_s) | 0, Σ_s).
/// With γ = 0 the generative term is not evaluated.
template <class T>
T stochastic_elbo(const PreparedData& data, const ModelParams<T>& p, const OperatorSpec* op,
                  const std::vector<VirtualDraw>& draws, double gamma) {
  const GpPosterior<T> post = build_posterior(data.x_std, data.y_centered, p);
  const T lml = log_marginal_likelihood(post);
  if (gamma == 0.0) return lml;
  if (op == nullptr) throw ValidationError("stochastic_elbo: gamma > 0 needs an operator");
  if (draws.empty()) throw ValidationError("stochastic_elbo: gamma > 0 needs at least one virtual draw");
  const ModelFrame frame = data.frame();
  std::vector<T> terms;
  terms.reserve(draws.size());
  for (const auto& d : draws) terms.push_back(generative_log_term(d.z_raw, T(d.eps), *op, post, p, frame));
  const T g = sum(std::span<const T>(terms)) * T(1.0 / static_cast<double>(draws.size()));
  return lml + T(gamma) * g;
}

template <class T>
T stochastic_elbo(const PreparedData& data, const ModelParams<T>& p, const OperatorSpec& op,
                  const Matrix<double>& z_raw, double eps, double gamma) {
  return stochastic_elbo(data, p, &op, std::vector<VirtualDraw>{{z_raw, eps}}, gamma);
}

// ---------------------------------------------------------------------------
// ADAM (ascent)

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double lr = 1e-3;

  static OptimizerState zeros(std::size_t n, double lr) { return {std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0, lr}; }
  bool operator==(const OptimizerState&) const = default;
};

/// θ ← θ + lr·m̂/(√v̂ + ε). A non-finite gradient leaves θ and the moments
/// untouched, halves the learning rate and throws NonFiniteGradient.
inline void adam_step(OptimizerState& state, std::span<const double> grad, std::span<double> theta,
                      const AdamConfig& cfg) {
  require_dims(grad.size(), theta.size(), "adam_step gradient");
  require_dims(state.m.size(), theta.size(), "adam_step first moment");
  require_dims(state.v.size(), theta.size(), "adam_step second moment");
  for (double g : grad) {
    if (!std::isfinite(g)) {
      state.lr *= 0.5;
      throw NonFiniteGradient("adam_step: non-finite gradient");
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < theta.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    theta[i] += state.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
  }
}

// ---------------------------------------------------------------------------
// Training loop

inline constexpr int kMaxConsecutiveFailures = 10;

struct TrainResult {
  ModelParams<double> params;
  std::vector<double> trace;  // L̃ per epoch; NaN marks an aborted step
  OptimizerState optimizer;
  std::string rng_state;
};

inline std::string rng_state_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_from_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw ParseError("checkpoint: bad RNG state");
  return rng;
}

using ProgressFn = std::function<void(std::size_t epoch, double value)>;

/// Continues training from `theta` with an existing generator and optimizer state.
inline TrainResult train_from(const PreparedData& data, const OperatorSpec* op, const TrainConfig& cfg,
                              ModelParams<double> theta, Rng& rng, OptimizerState state,
                              const ProgressFn& progress = {}) {
  cfg.validate();
  const double gamma = cfg.effective_gamma();
  if (gamma > 0.0 && op == nullptr) throw ValidationError("train: gamma > 0 needs an operator");
  const std::size_t n_params = param_count(theta);
  require_dims(state.m.size(), n_params, "train optimizer state");
  const VirtualInputSampler sampler = make_sampler(data, cfg);
  if (gamma > 0.0) sampler.validate();

  TrainResult result;
  result.trace.reserve(cfg.epochs);
  std::vector<double> flat = flatten(theta);
  ad::Tape tape;
  int failures = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<VirtualDraw> draws;
    if (gamma > 0.0) {
      for (std::size_t s = 0; s < cfg.mc_samples; ++s) draws.push_back(draw_virtual(sampler, data.standardizer, rng));
    }
    double value = std::numeric_limits<double>::quiet_NaN();
    try {
      auto [v, grad] = param_gradient(
          [&](const ModelParams<Var>& q) { return stochastic_elbo(data, q, op, draws, gamma); }, theta, tape);
      value = v;
      adam_step(state, grad, flat, cfg.adam);
      theta = unflatten(theta, flat);
      failures = 0;
    } catch (const NonFiniteGradient&) {
      // adam_step halves lr itself; param_gradient failures are handled the same way
      if (std::isnan(value)) state.lr *= 0.5;
      value = std::numeric_limits<double>::quiet_NaN();
      ++failures;
    } catch (const NumericalError&) {
      state.lr *= 0.5;
      value = std::numeric_limits<double>::quiet_NaN();
      ++failures;
    }
    result.trace.push_back(value);
    if (progress) progress(epoch, value);
    if (failures >= kMaxConsecutiveFailures) {
      throw TrainingDiverged("training diverged: " + std::to_string(failures) +
                             " consecutive non-finite steps at epoch " + std::to_string(epoch));
    }
  }
  result.params = std::move(theta);
  result.optimizer = std::move(state);
  result.rng_state = rng_state_string(rng);
  return result;
}

inline TrainResult train(const PreparedData& data, const OperatorSpec* op, const TrainConfig& cfg,
                         const ProgressFn& progress = {}) {
  cfg.validate();
  Rng rng(cfg.seed);
  ModelParams<double> theta = init_params(data, op, cfg, rng);
  auto state = OptimizerState::zeros(param_count(theta), cfg.adam.lr);
  return train_from(data, op, cfg, std::move(theta), rng, std::move(state), progress);
}

// ---------------------------------------------------------------------------
// Prediction

struct PredictiveMoments {
  std::vector<double> mean;      // raw output units
  std::vector<double> variance;  // latent function variance, unfloored
  double noise_variance = 0.0;
};

inline PredictiveMoments predict(const PreparedData& data, const ModelParams<double>& p, const Matrix<double>& x_raw) {
  require_dims(x_raw.cols(), data.dim(), "predict inputs");
  const GpPosterior<double> post = build_posterior(data.x_std, data.y_centered, p);
  PredictiveMoments out;
  out.noise_variance = post.noise_variance;
  out.mean.resize(x_raw.rows());
  out.variance.resize(x_raw.rows());
  for (std::size_t i = 0; i < x_raw.rows(); ++i) {
    const auto xs = data.standardizer.to_standard(x_raw.row(i));
    const auto pr = posterior_predict(std::span<const double>(xs), post, p);
    out.mean[i] = pr.mean + data.y_mean;
    out.variance[i] = pr.variance;
  }
  return out;
}

// ---------------------------------------------------------------------------
// γ selection

struct GammaSelection {
  double gamma = 0.0;
  std::vector<double> grid;
  std::vector<double> scores;  // mean validation RMSE, or mean negative log-likelihood
};

/// k-fold cross-validation over cfg.gamma_grid. Folds come from a shuffle
/// driven by Rng(cfg.seed); each fold trains with cfg.seed. Ties go to the
/// smaller γ.
inline GammaSelection select_gamma(const Dataset& raw, const OperatorSpec* op, TrainConfig cfg) {
  cfg.validate();
  if (cfg.gamma_grid.empty()) throw ValidationError("select_gamma: gamma_grid is empty");
  const std::size_t n = raw.size();
  if (n < cfg.cv_folds || n < 2) {
    throw InsufficientData("select_gamma: " + std::to_string(n) + " samples for " + std::to_string(cfg.cv_folds) +
                           " folds");
  }
  Dataset data = raw;
  if (data.bounds.empty()) data.bounds = bounding_box(data.x);

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng split_rng(cfg.seed);
  std::shuffle(perm.begin(), perm.end(), split_rng);
  std::vector<std::vector<std::size_t>> folds(cfg.cv_folds);
  for (std::size_t i = 0; i < n; ++i) folds[i % cfg.cv_folds].push_back(perm[i]);

  std::vector<double> grid = cfg.gamma_grid;
  std::sort(grid.begin(), grid.end());
  GammaSelection sel;
  sel.grid = grid;
  double best = std::numeric_limits<double>::infinity();
  for (double g : grid) {
    TrainConfig fc = cfg;
    fc.gamma = g;
    fc.mode = Mode::pidkl;
    double total = 0.0;
    for (std::size_t f = 0; f < cfg.cv_folds; ++f) {
      std::vector<std::size_t> tr;
      for (std::size_t o = 0; o < cfg.cv_folds; ++o) {
        if (o != f) tr.insert(tr.end(), folds[o].begin(), folds[o].end());
      }
      const PreparedData prepared = PreparedData::from(select_rows(data, tr));
      const Dataset held = select_rows(data, folds[f]);
      const TrainResult r = train(prepared, op, fc);
      const PredictiveMoments pm = predict(prepared, r.params, held.x);
      double score = 0.0;
      for (std::size_t i = 0; i < held.size(); ++i) {
        const double e = held.y[i] - pm.mean[i];
        if (cfg.cv_metric == CvMetric::rmse) {
          score += e * e;
        } else {
          const double s2 = std::max(pm.variance[i], kSqrtFloor) + pm.noise_variance;
          score += 0.5 * (std::log(2.0 * std::numbers::pi * s2) + e * e / s2);
        }
      }
      score /= static_cast<double>(held.size());
      total += cfg.cv_metric == CvMetric::rmse ? std::sqrt(score) : score;
    }
    const double mean = total / static_cast<double>(cfg.cv_folds);
    sel.scores.push_back(mean);
    if (mean < best) {
      best = mean;
      sel.gamma = g;
    }
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr int kCheckpointSchemaVersion = 1;

struct Checkpoint {
  TrainConfig config;
  std::optional<OperatorSpec> op;
  ModelParams<double> params;
  OptimizerState optimizer;
  std::string rng_state;
  Dataset train;

  bool operator==(const Checkpoint& o) const {
    return config == o.config && op == o.op && flatten(params) == flatten(o.params) &&
           param_names(params) == param_names(o.params) && optimizer == o.optimizer && rng_state == o.rng_state &&
           train.x == o.train.x && train.y == o.train.y && train.bounds == o.train.bounds;
  }
};

namespace detail {

inline nlohmann::json structure_json(const ModelParams<double>& p) {
  nlohmann::json s;
  s["kernel"] = p.kind == KernelKind::deep ? "deep" : "shallow";
  s["mlp_layers"] = nlohmann::json::array();
  for (const auto& l : p.mlp.layers) s["mlp_layers"].push_back({l.in, l.out});
  s["ard_dim"] = p.ard.log_lengthscales.size();
  s["source_dim"] = p.source.log_lengthscales.size();
  s["eq_coeffs"] = nlohmann::json::array();
  for (const auto& c : p.eq_coeffs) s["eq_coeffs"].push_back({{"name", c.name}, {"positive", c.positive}});
  return s;
}

inline ModelParams<double> shape_from_json(const nlohmann::json& s) {
  ModelParams<double> p;
  const auto kernel = s.at("kernel").get<std::string>();
  if (kernel != "deep" && kernel != "shallow") throw SchemaMismatch("checkpoint: unknown kernel '" + kernel + "'");
  p.kind = kernel == "deep" ? KernelKind::deep : KernelKind::shallow;
  for (const auto& l : s.at("mlp_layers")) {
    MlpLayer<double> layer;
    layer.in = l.at(0).get<std::size_t>();
    layer.out = l.at(1).get<std::size_t>();
    layer.weight.assign(layer.in * layer.out, 0.0);
    layer.bias.assign(layer.out, 0.0);
    p.mlp.layers.push_back(std::move(layer));
  }
  p.ard.log_lengthscales.assign(s.at("ard_dim").get<std::size_t>(), 0.0);
  p.source.log_lengthscales.assign(s.at("source_dim").get<std::size_t>(), 0.0);
  for (const auto& c : s.at("eq_coeffs")) {
    p.eq_coeffs.push_back({c.at("name").get<std::string>(), 0.0, c.at("positive").get<bool>()});
  }
  return p;
}

}  // namespace detail

inline nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["schema_version"] = kCheckpointSchemaVersion;
  j["config"] = to_json(c.config);
  j["operator"] = c.op ? to_json(*c.op) : nlohmann::json(nullptr);
  j["structure"] = detail::structure_json(c.params);
  j["params"] = flatten(c.params);
  j["alignment"] = param_names(c.params);
  j["optimizer"] = {{"m", c.optimizer.m}, {"v", c.optimizer.v}, {"step", c.optimizer.step}, {"lr", c.optimizer.lr}};
  j["rng_state"] = c.rng_state;
  nlohmann::json x = nlohmann::json::array();
  for (std::size_t i = 0; i < c.train.size(); ++i) {
    const auto r = c.train.x.row(i);
    x.push_back(std::vector<double>(r.begin(), r.end()));
  }
  nlohmann::json bounds = nlohmann::json::array();
  for (const auto& b : c.train.bounds) bounds.push_back({b.lo, b.hi});
  j["train"] = {{"x", x}, {"y", c.train.y}, {"bounds", bounds}};
  return j;
}

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || !j.contains("schema_version")) throw SchemaMismatch("checkpoint: missing schema_version");
    if (j.at("schema_version").get<int>() != kCheckpointSchemaVersion) {
      throw SchemaMismatch("checkpoint: unsupported schema_version " + j.at("schema_version").dump());
    }
    Checkpoint c;
    c.config = config_from_json(j.at("config"));
    if (!j.at("operator").is_null()) c.op = operator_from_json(j.at("operator"));
    const ModelParams<double> shape = detail::shape_from_json(j.at("structure"));
    const auto flat = j.at("params").get<std::vector<double>>();
    if (flat.size() != param_count(shape)) throw SchemaMismatch("checkpoint: parameter count does not match structure");
    c.params = unflatten(shape, flat);
    if (j.at("alignment").get<std::vector<std::string>>() != param_names(c.params)) {
      throw SchemaMismatch("checkpoint: alignment map does not match structure");
    }
    const auto& o = j.at("optimizer");
    c.optimizer.m = o.at("m").get<std::vector<double>>();
    c.optimizer.v = o.at("v").get<std::vector<double>>();
    c.optimizer.step = o.at("step").get<std::uint64_t>();
    c.optimizer.lr = o.at("lr").get<double>();
    if (c.optimizer.m.size() != flat.size() || c.optimizer.v.size() != flat.size()) {
      throw SchemaMismatch("checkpoint: optimizer moments misaligned with parameters");
    }
    c.rng_state = j.at("rng_state").get<std::string>();
    const auto& t = j.at("train");
    const auto rows = t.at("x").get<std::vector<std::vector<double>>>();
    c.train.y = t.at("y").get<std::vector<double>>();
    const std::size_t d = rows.empty() ? 0 : rows.front().size();
    c.train.x = Matrix<double>(rows.size(), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != d) throw SchemaMismatch("checkpoint: ragged training inputs");
      for (std::size_t k = 0; k < d; ++k) c.train.x(i, k) = rows[i][k];
    }
    for (const auto& b : t.at("bounds")) c.train.bounds.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    c.train.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatch(std::string("checkpoint: ") + e.what());
  }
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << to_json(c).dump(1) << '\n';
  if (!out) throw IoError("failed writing " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace pidkl
