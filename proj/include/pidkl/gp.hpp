#pragma once

// Exact GP regression with a zero mean function.
//
// Both kernel kinds are evaluated as σf²·exp(−‖φ(a) − φ(b)‖²) over a feature
// map φ: the tanh MLP output divided by √η for the deep kernel, and the input
// divided elementwise by √η_k for SE-ARD. Features are computed once per
// point, so the Gram matrix costs one fused squared distance per pair.

#include <cmath>
#include <numbers>
#include <span>
#include <type_traits>
#include <vector>

#include "pidkl/autodiff/jet.hpp"
#include "pidkl/kernels.hpp"
#include "pidkl/linalg.hpp"
#include "pidkl/params.hpp"

namespace pidkl {

template <class T>
std::vector<T> feature_map(const ModelParams<T>& p, std::span<const T> x) {
  using std::exp;
  using ad::exp;
  if (p.kind == KernelKind::deep) {
    std::vector<T> f = mlp_forward(x, p.mlp);
    const T s = exp(T(-0.5) * p.base.log_lengthscale);
    for (auto& v : f) v = v * s;
    return f;
  }
  require_dims(x.size(), p.ard.log_lengthscales.size(), "feature_map");
  std::vector<T> f(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) f[k] = x[k] * exp(T(-0.5) * p.ard.log_lengthscales[k]);
  return f;
}

/// Feature map carrying input jets.
template <class T>
JetVec<T> feature_map(const ModelParams<T>& p, const JetVec<T>& x) {
  using std::exp;
  using ad::exp;
  if (p.kind == KernelKind::deep) {
    JetVec<T> f = mlp_forward(x, p.mlp);
    const T s = exp(T(-0.5) * p.base.log_lengthscale);
    for (int c = 0; c < f.components(); ++c) {
      for (auto& v : f.component(c)) v = v * s;
    }
    return f;
  }
  require_dims(x.size(), p.ard.log_lengthscales.size(), "feature_map");
  JetVec<T> f = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const T s = exp(T(-0.5) * p.ard.log_lengthscales[k]);
    for (int c = 0; c < f.components(); ++c) f.component(c)[k] = f.component(c)[k] * s;
  }
  return f;
}

/// Cached factorization of K + τ⁻¹I for one parameter setting.
template <class T>
struct GpPosterior {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<std::vector<T>> features;  // φ(x_i)
  CholFactor<T> chol;
  std::vector<T> beta;   // L⁻¹ y
  std::vector<T> alpha;  // (K + τ⁻¹I)⁻¹ y
  T signal_variance{1.0};
  T noise_variance{0.0};
  std::vector<double> fingerprint;  // flattened parameters (double posteriors only)

  void check_fresh(const ModelParams<double>& p) const
    requires std::is_same_v<T, double>
  {
    if (fingerprint != flatten(p)) throw CacheInvalid("GP posterior is stale for these parameters");
  }
};

template <class T>
std::vector<T> to_scalar_vector(std::span<const double> x) {
  return std::vector<T>(x.begin(), x.end());
}

/// Builds the posterior cache from standardized inputs and centered outputs.
/// An empty training set yields the prior.
template <class T>
GpPosterior<T> build_posterior(const Matrix<double>& x_std, std::span<const double> y,
                               const ModelParams<T>& p) {
  using std::exp;
  using ad::exp;
  require_dims(y.size(), x_std.rows(), "build_posterior");
  GpPosterior<T> post;
  post.n = y.size();
  post.dim = x_std.cols();
  post.signal_variance = p.signal_variance();
  post.noise_variance = exp(-p.log_tau);
  if constexpr (std::is_same_v<T, double>) post.fingerprint = flatten(p);
  if (post.n == 0) return post;

  post.features.reserve(post.n);
  for (std::size_t i = 0; i < post.n; ++i) {
    const auto xi = to_scalar_vector<T>(x_std.row(i));
    post.features.push_back(feature_map(p, std::span<const T>(xi)));
  }
  SymMatrix<T> k(post.n);
  for (std::size_t i = 0; i < post.n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const T d2 = squared_distance(std::span<const T>(post.features[i]), std::span<const T>(post.features[j]));
      k.set(i, j, post.signal_variance * exp(-d2));
    }
    k.set(i, i, post.signal_variance + post.noise_variance);
  }
  post.chol = cholesky_jittered(k, 0.0);
  const auto yt = to_scalar_vector<T>(y);
  post.beta = solve_lower(post.chol, std::span<const T>(yt));
  post.alpha = solve_lower_transpose(post.chol, std::span<const T>(post.beta));
  return post;
}

/// log N(y | 0, K + τ⁻¹I) from a built posterior.
template <class T>
T log_marginal_likelihood(const GpPosterior<T>& post) {
  if (post.n == 0) return T(0.0);
  const std::span<const T> b(post.beta);
  return T(-0.5) * dot(b, b) - T(0.5) * log_det(post.chol) -
         T(0.5 * static_cast<double>(post.n) * std::log(2.0 * std::numbers::pi));
}

template <class T>
T log_marginal_likelihood(const Matrix<double>& x_std, std::span<const double> y, const ModelParams<T>& p) {
  return log_marginal_likelihood(build_posterior(x_std, y, p));
}

template <class T>
struct Prediction {
  T mean;
  T variance;  // unfloored
};

/// Posterior mean and variance of the latent function at a standardized input.
template <class T>
Prediction<T> posterior_predict(std::span<const double> x_std, const GpPosterior<T>& post,
                                const ModelParams<T>& p) {
  using std::exp;
  using ad::exp;
  if constexpr (std::is_same_v<T, double>) post.check_fresh(p);
  require_dims(x_std.size(), post.dim, "posterior_predict");
  if (post.n == 0) return {T(0.0), post.signal_variance};
  const auto xs = to_scalar_vector<T>(x_std);
  const auto f = feature_map(p, std::span<const T>(xs));
  std::vector<T> kstar(post.n);
  for (std::size_t i = 0; i < post.n; ++i) {
    kstar[i] = post.signal_variance *
               exp(-squared_distance(std::span<const T>(f), std::span<const T>(post.features[i])));
  }
  const auto w = solve_lower(post.chol, std::span<const T>(kstar));
  const std::span<const T> ws(w);
  return {dot(ws, std::span<const T>(post.beta)), post.signal_variance - dot(ws, ws)};
}

/// Jets of the posterior mean and variance at a standardized input.
template <class T>
std::pair<Jet2<T>, Jet2<T>> posterior_moment_jets(std::span<const double> x_std, const GpPosterior<T>& post,
                                                  const ModelParams<T>& p) {
  const int d = static_cast<int>(x_std.size());
  require_dims(x_std.size(), post.dim, "posterior_moment_jets");
  if (post.n == 0) return {Jet2<T>(d, T(0.0)), Jet2<T>(d, post.signal_variance)};

  JetVec<T> x(d, x_std.size());
  for (int k = 0; k < d; ++k) x.set(static_cast<std::size_t>(k), Jet2<T>::variable(d, k, T(x_std[k])));
  const JetVec<T> f = feature_map(p, x);
  const std::size_t width = f.size();
  const std::span<const T> f0(f.component(0));

  // Cross terms of the squared distance that do not depend on the training point.
  std::vector<T> grad_cross(static_cast<std::size_t>(jet_components(d)));
  for (int a = 0; a < d; ++a) {
    for (int b = a; b < d; ++b) {
      grad_cross[static_cast<std::size_t>(hess_component(d, a, b))] =
          dot(std::span<const T>(f.component(1 + a)), std::span<const T>(f.component(1 + b)));
    }
  }

  JetVec<T> kstar(d, post.n);
  std::vector<T> diff(width);
  for (std::size_t i = 0; i < post.n; ++i) {
    const auto& fi = post.features[i];
    for (std::size_t k = 0; k < width; ++k) diff[k] = f0[k] - fi[k];
    const std::span<const T> ds(diff);
    Jet2<T> d2(d, squared_distance(f0, std::span<const T>(fi)));
    for (int a = 0; a < d; ++a) d2.grad(a) = T(2.0) * dot(ds, std::span<const T>(f.component(1 + a)));
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b) {
        const int h = hess_component(d, a, b);
        d2[h] = T(2.0) * (grad_cross[static_cast<std::size_t>(h)] + dot(ds, std::span<const T>(f.component(h))));
      }
    }
    kstar.set(i, post.signal_variance * exp(-d2));
  }

  JetVec<T> w(d, post.n);
  for (int c = 0; c < kstar.components(); ++c) {
    w.component(c) = solve_lower(post.chol, std::span<const T>(kstar.component(c)));
  }
  Jet2<T> mean = dot(w, std::span<const T>(post.beta));
  Jet2<T> var = Jet2<T>(d, post.signal_variance) - dot_self(w);
  return {mean, var};
}

/// Jet of the posterior function draw μ(x) + ε·√max(v(x), floor) in
/// standardized input coordinates (the GP mean offset is not included).
template <class T>
Jet2<T> posterior_surrogate(std::span<const double> x_std, const T& eps, const GpPosterior<T>& post,
                            const ModelParams<T>& p) {
  const auto [mean, var] = posterior_moment_jets(x_std, post, p);
  return mean + sqrt_floored(var) * eps;
}

}  // namespace pidkl
