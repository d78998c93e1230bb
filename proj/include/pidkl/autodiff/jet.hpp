#pragma once

// Second-order Taylor jets in the input directions.
//
// A Jet2 carries f, ∇f and the packed upper triangle of ∇²f. The scalar type
// T is either double (plain input derivatives) or ad::Var, in which case every
// jet component is itself recorded on the tape and parameter gradients flow
// through the input derivatives.

#include <array>
#include <cmath>
#include <span>
#include <type_traits>
#include <vector>

#include "pidkl/autodiff/tape.hpp"
#include "pidkl/errors.hpp"

namespace pidkl {

inline constexpr int kMaxJetDim = 6;

constexpr int jet_components(int dim) { return 1 + dim + dim * (dim + 1) / 2; }

inline constexpr int kMaxJetComponents = jet_components(kMaxJetDim);

/// Position of ∂²/∂x_i∂x_j (i <= j) in the component array.
constexpr int hess_component(int dim, int i, int j) {
  if (i > j) {
    const int tmp = i;
    i = j;
    j = tmp;
  }
  return 1 + dim + i * dim - i * (i - 1) / 2 + (j - i);
}

template <class T>
class Jet2 {
public:
  Jet2() = default;

  /// Constant jet: zero derivatives.
  explicit Jet2(int dim, T value = T{}) : dim_(dim) {
    if (dim < 0 || dim > kMaxJetDim) {
      throw DimensionMismatch("Jet2: input dimension " + std::to_string(dim) + " exceeds " +
                              std::to_string(kMaxJetDim));
    }
    c_[0] = value;
  }

  /// Seeds x_i as an independent input.
  static Jet2 variable(int dim, int i, T value) {
    Jet2 j(dim, value);
    j.c_[static_cast<std::size_t>(1 + i)] = T(1.0);
    return j;
  }

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] int size() const { return jet_components(dim_); }

  T& operator[](int c) { return c_[static_cast<std::size_t>(c)]; }
  const T& operator[](int c) const { return c_[static_cast<std::size_t>(c)]; }

  T& value() { return c_[0]; }
  const T& value() const { return c_[0]; }
  T& grad(int i) { return c_[static_cast<std::size_t>(1 + i)]; }
  const T& grad(int i) const { return c_[static_cast<std::size_t>(1 + i)]; }
  T& hess(int i, int j) { return c_[static_cast<std::size_t>(hess_component(dim_, i, j))]; }
  const T& hess(int i, int j) const {
    return c_[static_cast<std::size_t>(hess_component(dim_, i, j))];
  }

private:
  int dim_ = 0;
  std::array<T, kMaxJetComponents> c_{};
};

template <class T>
using scalar_arg_t = std::type_identity_t<T>;

/// Composes a scalar function with value f0 and derivatives f1, f2 (all taken
/// at u.value()) onto the jet u.
template <class T>
Jet2<T> chain(const Jet2<T>& u, const T& f0, const T& f1, const T& f2) {
  const int d = u.dim();
  Jet2<T> out(d, f0);
  for (int i = 0; i < d; ++i) out.grad(i) = f1 * u.grad(i);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) out.hess(i, j) = f1 * u.hess(i, j) + f2 * (u.grad(i) * u.grad(j));
  }
  return out;
}

template <class T>
Jet2<T> operator+(const Jet2<T>& a, const Jet2<T>& b) {
  require_dims(static_cast<std::size_t>(b.dim()), static_cast<std::size_t>(a.dim()), "Jet2 +");
  Jet2<T> out(a.dim());
  for (int c = 0; c < a.size(); ++c) out[c] = a[c] + b[c];
  return out;
}

template <class T>
Jet2<T> operator-(const Jet2<T>& a, const Jet2<T>& b) {
  require_dims(static_cast<std::size_t>(b.dim()), static_cast<std::size_t>(a.dim()), "Jet2 -");
  Jet2<T> out(a.dim());
  for (int c = 0; c < a.size(); ++c) out[c] = a[c] - b[c];
  return out;
}

template <class T>
Jet2<T> operator-(const Jet2<T>& a) {
  Jet2<T> out(a.dim());
  for (int c = 0; c < a.size(); ++c) out[c] = -a[c];
  return out;
}

template <class T>
Jet2<T> operator+(const Jet2<T>& a, const scalar_arg_t<T>& s) {
  Jet2<T> out = a;
  out.value() = a.value() + s;
  return out;
}

template <class T>
Jet2<T> operator+(const scalar_arg_t<T>& s, const Jet2<T>& a) {
  return a + s;
}

template <class T>
Jet2<T> operator-(const Jet2<T>& a, const scalar_arg_t<T>& s) {
  Jet2<T> out = a;
  out.value() = a.value() - s;
  return out;
}

template <class T>
Jet2<T> operator-(const scalar_arg_t<T>& s, const Jet2<T>& a) {
  return -a + s;
}

template <class T>
Jet2<T> operator*(const Jet2<T>& a, const scalar_arg_t<T>& s) {
  Jet2<T> out(a.dim());
  for (int c = 0; c < a.size(); ++c) out[c] = a[c] * s;
  return out;
}

template <class T>
Jet2<T> operator*(const scalar_arg_t<T>& s, const Jet2<T>& a) {
  return a * s;
}

template <class T>
Jet2<T> operator*(const Jet2<T>& a, const Jet2<T>& b) {
  require_dims(static_cast<std::size_t>(b.dim()), static_cast<std::size_t>(a.dim()), "Jet2 *");
  const int d = a.dim();
  Jet2<T> out(d, a.value() * b.value());
  for (int i = 0; i < d; ++i) out.grad(i) = a.grad(i) * b.value() + a.value() * b.grad(i);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      out.hess(i, j) = a.hess(i, j) * b.value() + a.grad(i) * b.grad(j) + a.grad(j) * b.grad(i) +
                       a.value() * b.hess(i, j);
    }
  }
  return out;
}

template <class T>
Jet2<T> reciprocal(const Jet2<T>& a) {
  const T r = T(1.0) / a.value();
  const T r2 = r * r;
  return chain(a, r, -r2, T(2.0) * r2 * r);
}

template <class T>
Jet2<T> operator/(const Jet2<T>& a, const Jet2<T>& b) {
  return a * reciprocal(b);
}

template <class T>
Jet2<T> operator/(const Jet2<T>& a, const scalar_arg_t<T>& s) {
  return a * (T(1.0) / s);
}

template <class T>
Jet2<T> exp(const Jet2<T>& a) {
  using std::exp;
  const T e = exp(a.value());
  return chain(a, e, e, e);
}

template <class T>
Jet2<T> log(const Jet2<T>& a) {
  using std::log;
  const T r = T(1.0) / a.value();
  return chain(a, log(a.value()), r, -(r * r));
}

template <class T>
Jet2<T> tanh(const Jet2<T>& a) {
  using std::tanh;
  const T t = tanh(a.value());
  const T d1 = T(1.0) - t * t;
  return chain(a, t, d1, T(-2.0) * t * d1);
}

/// Square root with the argument floored at kSqrtFloor; below the floor the
/// result is constant and all derivatives vanish.
template <class T>
Jet2<T> sqrt_floored(const Jet2<T>& a) {
  if (value_of(a.value()) < kSqrtFloor) return Jet2<T>(a.dim(), T(std::sqrt(kSqrtFloor)));
  using std::sqrt;
  using ad::sqrt;
  const T s = sqrt(a.value());
  const T d1 = T(0.5) / s;
  return chain(a, s, d1, T(-0.25) / (s * a.value()));
}

template <class T>
Jet2<T> pow(const Jet2<T>& a, double p) {
  using std::pow;
  using ad::pow;
  const T y = pow(a.value(), p);
  const T d1 = p * pow(a.value(), p - 1.0);
  const T d2 = (p * (p - 1.0)) * pow(a.value(), p - 2.0);
  return chain(a, y, d1, d2);
}

template <class T>
bool all_finite(const Jet2<T>& a) {
  for (int c = 0; c < a.size(); ++c) {
    if (!std::isfinite(value_of(a[c]))) return false;
  }
  return true;
}

/// Value, gradient and Hessian of `fn` at `x`. `fn` receives the seeded input
/// jets as a span and returns a Jet2<double>.
template <class F>
Jet2<double> jet_eval(F&& fn, std::span<const double> x) {
  const int d = static_cast<int>(x.size());
  if (d > kMaxJetDim) throw DimensionMismatch("jet_eval: too many inputs");
  std::vector<Jet2<double>> in;
  in.reserve(x.size());
  for (int i = 0; i < d; ++i) {
    if (!std::isfinite(x[static_cast<std::size_t>(i)])) {
      throw NonFiniteIntermediate("jet_eval: non-finite input");
    }
    in.push_back(Jet2<double>::variable(d, i, x[static_cast<std::size_t>(i)]));
  }
  Jet2<double> out = fn(std::span<const Jet2<double>>(in));
  if (!all_finite(out)) throw NonFiniteIntermediate("jet_eval: non-finite result");
  return out;
}

/// Vector of jets stored component-major, so that every component is a
/// contiguous span usable by n-ary dot products and triangular solves.
template <class T>
class JetVec {
public:
  JetVec() = default;
  JetVec(int dim, std::size_t n)
      : dim_(dim), n_(n), comp_(static_cast<std::size_t>(jet_components(dim)), std::vector<T>(n)) {}

  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] std::size_t size() const { return n_; }
  [[nodiscard]] int components() const { return jet_components(dim_); }

  std::vector<T>& component(int c) { return comp_[static_cast<std::size_t>(c)]; }
  const std::vector<T>& component(int c) const { return comp_[static_cast<std::size_t>(c)]; }

  [[nodiscard]] Jet2<T> at(std::size_t k) const {
    Jet2<T> j(dim_);
    for (int c = 0; c < components(); ++c) j[c] = comp_[static_cast<std::size_t>(c)][k];
    return j;
  }

  void set(std::size_t k, const Jet2<T>& j) {
    for (int c = 0; c < components(); ++c) comp_[static_cast<std::size_t>(c)][k] = j[c];
  }

private:
  int dim_ = 0;
  std::size_t n_ = 0;
  std::vector<std::vector<T>> comp_;
};

/// Jet of Σ_k u_k w_k for jets u_k and input-constant weights w_k.
template <class T>
Jet2<T> dot(const JetVec<T>& u, std::span<const T> w) {
  Jet2<T> out(u.dim());
  for (int c = 0; c < u.components(); ++c) out[c] = dot(std::span<const T>(u.component(c)), w);
  return out;
}

/// Jet of Σ_k u_k².
template <class T>
Jet2<T> dot_self(const JetVec<T>& u) {
  const int d = u.dim();
  const std::span<const T> u0(u.component(0));
  Jet2<T> out(d, dot(u0, u0));
  for (int i = 0; i < d; ++i) out.grad(i) = T(2.0) * dot(u0, std::span<const T>(u.component(1 + i)));
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const T cross = dot(std::span<const T>(u.component(1 + i)), std::span<const T>(u.component(1 + j)));
      const T curv = dot(u0, std::span<const T>(u.component(hess_component(d, i, j))));
      out.hess(i, j) = T(2.0) * (cross + curv);
    }
  }
  return out;
}

}  // namespace pidkl
