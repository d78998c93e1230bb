#pragma once

// Trainable parameter set and its canonical flattening.
//
// Flattening order (the alignment map of every gradient and checkpoint):
//   deep kernel:    mlp.<l>.weight (row-major), mlp.<l>.bias for each layer l,
//                   base.log_lengthscale, base.log_signal_variance
//   shallow kernel: ard.log_lengthscales[k], ard.log_signal_variance
//   then always:    source.log_lengthscales[k], source.log_signal_variance,
//                   log_tau, eq.<name> in declaration order.

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "pidkl/autodiff/tape.hpp"
#include "pidkl/errors.hpp"
#include "pidkl/kernels.hpp"

namespace pidkl {

enum class KernelKind { shallow, deep };

/// Unknown equation coefficient. Positive coefficients are stored as log values.
template <class T>
struct EqCoeff {
  std::string name;
  T raw{0.0};
  bool positive = false;

  [[nodiscard]] T value() const {
    using std::exp;
    using ad::exp;
    return positive ? T(exp(raw)) : raw;
  }
};

template <class T>
struct ModelParams {
  KernelKind kind = KernelKind::deep;
  MlpParams<T> mlp;        // deep only
  RbfParams<T> base;       // deep only
  ArdParams<T> ard;        // shallow only
  ArdParams<T> source;     // kernel of the latent source
  T log_tau{0.0};          // log inverse noise variance
  std::vector<EqCoeff<T>> eq_coeffs;

  [[nodiscard]] const EqCoeff<T>* find_coeff(std::string_view name) const {
    for (const auto& c : eq_coeffs) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }

  [[nodiscard]] T signal_variance() const {
    using std::exp;
    using ad::exp;
    return exp(kind == KernelKind::deep ? base.log_signal_variance : ard.log_signal_variance);
  }
};

/// Calls f(group, index, value&) for every trainable scalar in canonical order.
template <class P, class F>
void visit_params(P& p, F&& f) {
  if (p.kind == KernelKind::deep) {
    for (std::size_t l = 0; l < p.mlp.layers.size(); ++l) {
      auto& layer = p.mlp.layers[l];
      const std::string prefix = "mlp." + std::to_string(l);
      const std::string wname = prefix + ".weight";
      const std::string bname = prefix + ".bias";
      for (std::size_t i = 0; i < layer.weight.size(); ++i) f(wname, i, layer.weight[i]);
      for (std::size_t i = 0; i < layer.bias.size(); ++i) f(bname, i, layer.bias[i]);
    }
    f(std::string("base.log_lengthscale"), 0, p.base.log_lengthscale);
    f(std::string("base.log_signal_variance"), 0, p.base.log_signal_variance);
  } else {
    for (std::size_t k = 0; k < p.ard.log_lengthscales.size(); ++k) {
      f(std::string("ard.log_lengthscales"), k, p.ard.log_lengthscales[k]);
    }
    f(std::string("ard.log_signal_variance"), 0, p.ard.log_signal_variance);
  }
  for (std::size_t k = 0; k < p.source.log_lengthscales.size(); ++k) {
    f(std::string("source.log_lengthscales"), k, p.source.log_lengthscales[k]);
  }
  f(std::string("source.log_signal_variance"), 0, p.source.log_signal_variance);
  f(std::string("log_tau"), 0, p.log_tau);
  for (auto& c : p.eq_coeffs) f("eq." + c.name, 0, c.raw);
}

template <class T>
std::size_t param_count(const ModelParams<T>& p) {
  std::size_t n = 0;
  visit_params(p, [&](const std::string&, std::size_t, const T&) { ++n; });
  return n;
}

/// "group[index]" labels aligned with flatten().
template <class T>
std::vector<std::string> param_names(const ModelParams<T>& p) {
  std::vector<std::string> names;
  visit_params(p, [&](const std::string& g, std::size_t i, const T&) {
    names.push_back(g + "[" + std::to_string(i) + "]");
  });
  return names;
}

inline std::vector<double> flatten(const ModelParams<double>& p) {
  std::vector<double> flat;
  visit_params(p, [&](const std::string&, std::size_t, const double& v) { flat.push_back(v); });
  return flat;
}

/// Copy of `shape` with values taken from `flat`.
inline ModelParams<double> unflatten(const ModelParams<double>& shape, std::span<const double> flat) {
  ModelParams<double> out = shape;
  require_dims(flat.size(), param_count(shape), "unflatten");
  std::size_t k = 0;
  visit_params(out, [&](const std::string&, std::size_t, double& v) { v = flat[k++]; });
  return out;
}

/// Same structure with every scalar converted by `conv`, applied in canonical order.
template <class U, class T, class Conv>
ModelParams<U> rebind(const ModelParams<T>& p, Conv&& conv) {
  ModelParams<U> out;
  out.kind = p.kind;
  out.mlp.layers.resize(p.mlp.layers.size());
  for (std::size_t l = 0; l < p.mlp.layers.size(); ++l) {
    const auto& src = p.mlp.layers[l];
    auto& dst = out.mlp.layers[l];
    dst.in = src.in;
    dst.out = src.out;
    dst.weight.resize(src.weight.size());
    dst.bias.resize(src.bias.size());
  }
  out.ard.log_lengthscales.resize(p.ard.log_lengthscales.size());
  out.source.log_lengthscales.resize(p.source.log_lengthscales.size());
  for (const auto& c : p.eq_coeffs) out.eq_coeffs.push_back(EqCoeff<U>{c.name, U{}, c.positive});

  std::vector<const T*> from;
  visit_params(p, [&](const std::string&, std::size_t, const T& v) { from.push_back(&v); });
  std::size_t k = 0;
  visit_params(out, [&](const std::string&, std::size_t, U& v) { v = conv(*from[k++]); });
  return out;
}

/// Records every parameter as a tape leaf; leaf ids follow the canonical order.
inline ModelParams<Var> lift(const ModelParams<double>& p, ad::Tape& tape) {
  return rebind<Var>(p, [&](double v) { return tape.variable(v); });
}

/// Values of a taped parameter set.
inline ModelParams<double> lower(const ModelParams<Var>& p) {
  return rebind<double>(p, [](const Var& v) { return v.v; });
}

}  // namespace pidkl
