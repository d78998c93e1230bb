#pragma once

// Covariance functions: RBF, SE-ARD and the deep kernel (tanh MLP feature map
// feeding an RBF). All hyperparameters are stored in log space.

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "pidkl/autodiff/jet.hpp"
#include "pidkl/errors.hpp"
#include "pidkl/linalg.hpp"

namespace pidkl {

/// σf²·exp(−‖a − b‖² / η), η = exp(log_lengthscale).
template <class T>
struct RbfParams {
  T log_lengthscale{0.0};
  T log_signal_variance{0.0};
};

/// σf²·exp(−Σ_k (a_k − b_k)² / η_k).
template <class T>
struct ArdParams {
  std::vector<T> log_lengthscales;
  T log_signal_variance{0.0};
};

template <class T>
struct MlpLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<T> weight;  // out × in, row-major
  std::vector<T> bias;    // out

  [[nodiscard]] std::span<const T> weight_row(std::size_t j) const {
    return {weight.data() + j * in, in};
  }
};

/// Fully connected network with tanh after every layer.
template <class T>
struct MlpParams {
  std::vector<MlpLayer<T>> layers;

  [[nodiscard]] std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  [[nodiscard]] std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out; }
};

/// Default widths: five layers of twenty tanh units.
inline std::vector<std::size_t> default_mlp_widths() { return {20, 20, 20, 20, 20}; }

/// Glorot-uniform weights, zero biases, drawn layer by layer in row-major order.
template <class Rng>
MlpParams<double> make_mlp(std::size_t input_dim, const std::vector<std::size_t>& widths, Rng& rng) {
  if (input_dim == 0 || widths.empty()) throw ValidationError("make_mlp: empty network");
  MlpParams<double> p;
  std::size_t in = input_dim;
  for (std::size_t w : widths) {
    if (w == 0) throw ValidationError("make_mlp: zero-width layer");
    MlpLayer<double> layer;
    layer.in = in;
    layer.out = w;
    const double bound = std::sqrt(6.0 / static_cast<double>(in + w));
    std::uniform_real_distribution<double> u(-bound, bound);
    layer.weight.resize(in * w);
    for (auto& x : layer.weight) x = u(rng);
    layer.bias.assign(w, 0.0);
    p.layers.push_back(std::move(layer));
    in = w;
  }
  return p;
}

template <class T>
T rbf_eval(std::span<const T> xi, std::span<const T> xj, const RbfParams<T>& p) {
  using std::exp;
  using ad::exp;
  require_dims(xj.size(), xi.size(), "rbf_eval");
  return exp(p.log_signal_variance - squared_distance(xi, xj) / exp(p.log_lengthscale));
}

template <class T>
T ard_eval(std::span<const T> xi, std::span<const T> xj, const ArdParams<T>& p) {
  using std::exp;
  using ad::exp;
  require_dims(xi.size(), p.log_lengthscales.size(), "ard_eval");
  require_dims(xj.size(), xi.size(), "ard_eval");
  std::vector<T> scaled(xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k) {
    const T diff = xi[k] - xj[k];
    scaled[k] = diff * diff / exp(p.log_lengthscales[k]);
  }
  return exp(p.log_signal_variance - sum(std::span<const T>(scaled)));
}

template <class T>
std::vector<T> mlp_forward(std::span<const T> x, const MlpParams<T>& p) {
  using std::tanh;
  using ad::tanh;
  require_dims(x.size(), p.input_dim(), "mlp_forward");
  std::vector<T> h(x.begin(), x.end());
  for (const auto& layer : p.layers) {
    std::vector<T> next(layer.out);
    for (std::size_t j = 0; j < layer.out; ++j) {
      next[j] = tanh(dot(layer.weight_row(j), std::span<const T>(h)) + layer.bias[j]);
    }
    h = std::move(next);
  }
  return h;
}

/// Forward pass carrying input-direction jets; `x` holds one jet per input
/// coordinate (component-major, x.size() == input_dim).
template <class T>
JetVec<T> mlp_forward(const JetVec<T>& x, const MlpParams<T>& p) {
  require_dims(x.size(), p.input_dim(), "mlp_forward");
  JetVec<T> h = x;
  for (const auto& layer : p.layers) {
    JetVec<T> pre(h.dim(), layer.out);
    for (int c = 0; c < h.components(); ++c) {
      const std::span<const T> hc(h.component(c));
      auto& out = pre.component(c);
      for (std::size_t j = 0; j < layer.out; ++j) out[j] = dot(layer.weight_row(j), hc);
    }
    for (std::size_t j = 0; j < layer.out; ++j) {
      pre.component(0)[j] = pre.component(0)[j] + layer.bias[j];
      pre.set(j, tanh(pre.at(j)));
    }
    h = std::move(pre);
  }
  return h;
}

/// k_RBF(NN(xi), NN(xj)).
template <class T>
T deep_kernel_eval(std::span<const T> xi, std::span<const T> xj, const MlpParams<T>& mlp,
                   const RbfParams<T>& base) {
  const auto fi = mlp_forward(xi, mlp);
  const auto fj = mlp_forward(xj, mlp);
  return rbf_eval(std::span<const T>(fi), std::span<const T>(fj), base);
}

/// [K]_ij = k(x_i, x_j) over the rows of X, evaluated once per unordered pair.
template <class T, class Kernel>
SymMatrix<T> gram_matrix(const Matrix<T>& x, Kernel&& kernel) {
  if (x.rows() == 0) throw DimensionMismatch("gram_matrix: no rows");
  SymMatrix<T> k(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) k.set(i, j, kernel(x.row(i), x.row(j)));
  }
  return k;
}

}  // namespace pidkl
