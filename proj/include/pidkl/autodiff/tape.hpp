#pragma once

// Reverse-mode accumulation over a flat Wengert list.
//
// Every recorded node stores, for each of its arguments, the argument's node
// id and the local partial derivative evaluated during the forward pass. The
// reverse sweep is therefore a single loop of fused multiply-adds and needs no
// knowledge of which primitive produced a node. N-ary nodes (sum, dot,
// squared distance) keep long reductions such as Cholesky updates and MLP
// layers to one node each.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "pidkl/errors.hpp"

namespace pidkl::ad {

/// Value carried through a recorded computation. A negative id marks a
/// constant that never touches the tape.
struct Var {
  double v = 0.0;
  std::int32_t id = -1;

  Var() = default;
  Var(double value) : v(value) {}  // NOLINT: implicit constants are intended
  Var(double value, std::int32_t node) : v(value), id(node) {}

  [[nodiscard]] bool is_constant() const { return id < 0; }
  [[nodiscard]] double value() const { return v; }
};

class Tape {
public:
  Tape() { ends_.reserve(1 << 16); }

  /// Creates an independent variable.
  Var variable(double value) { return Var(value, close()); }

  void clear() {
    ends_.clear();
    args_.clear();
    partials_.clear();
  }

  [[nodiscard]] std::size_t size() const { return ends_.size(); }
  [[nodiscard]] std::size_t entries() const { return args_.size(); }

  // Node construction: push the argument entries, then close.
  void arg(const Var& x, double partial) {
    if (!x.is_constant() && partial != 0.0) {
      args_.push_back(x.id);
      partials_.push_back(partial);
    }
  }

  std::int32_t close() {
    ends_.push_back(static_cast<std::uint32_t>(args_.size()));
    return static_cast<std::int32_t>(ends_.size() - 1);
  }

  /// Adjoints of every node with respect to `out`.
  [[nodiscard]] std::vector<double> adjoints(const Var& out) const {
    std::vector<double> adj(ends_.size(), 0.0);
    if (out.is_constant()) return adj;
    adj[static_cast<std::size_t>(out.id)] = 1.0;
    for (std::int64_t i = out.id; i >= 0; --i) {
      const double g = adj[static_cast<std::size_t>(i)];
      if (g == 0.0) continue;
      const std::uint32_t begin = i == 0 ? 0u : ends_[static_cast<std::size_t>(i - 1)];
      const std::uint32_t end = ends_[static_cast<std::size_t>(i)];
      for (std::uint32_t e = begin; e < end; ++e) {
        adj[static_cast<std::size_t>(args_[e])] += g * partials_[e];
      }
    }
    return adj;
  }

  /// Gradient of `out` with respect to the first `n_leaves` nodes, which must
  /// be the independent variables created before any other node.
  [[nodiscard]] std::vector<double> gradient(const Var& out, std::size_t n_leaves) const {
    auto adj = adjoints(out);
    adj.resize(n_leaves);
    return adj;
  }

  static Tape*& active() {
    thread_local Tape* current = nullptr;
    return current;
  }

  static Tape& current() {
    Tape* t = active();
    if (t == nullptr) throw std::logic_error("pidkl::ad: no active tape on this thread");
    return *t;
  }

private:
  std::vector<std::uint32_t> ends_;
  std::vector<std::int32_t> args_;
  std::vector<double> partials_;
};

/// Makes `tape` the recording target of the current thread for its lifetime.
class TapeScope {
public:
  explicit TapeScope(Tape& tape) : previous_(Tape::active()) { Tape::active() = &tape; }
  ~TapeScope() { Tape::active() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

private:
  Tape* previous_;
};

namespace detail {

inline Var unary(const Var& x, double value, double dx) {
  if (x.is_constant()) return Var(value);
  Tape& t = Tape::current();
  t.arg(x, dx);
  return Var(value, t.close());
}

inline Var binary(const Var& x, const Var& y, double value, double dx, double dy) {
  if (x.is_constant() && y.is_constant()) return Var(value);
  Tape& t = Tape::current();
  t.arg(x, dx);
  t.arg(y, dy);
  return Var(value, t.close());
}

}  // namespace detail

inline Var operator+(const Var& a, const Var& b) { return detail::binary(a, b, a.v + b.v, 1.0, 1.0); }
inline Var operator-(const Var& a, const Var& b) { return detail::binary(a, b, a.v - b.v, 1.0, -1.0); }
inline Var operator*(const Var& a, const Var& b) { return detail::binary(a, b, a.v * b.v, b.v, a.v); }
inline Var operator/(const Var& a, const Var& b) {
  const double q = a.v / b.v;
  return detail::binary(a, b, q, 1.0 / b.v, -q / b.v);
}
inline Var operator-(const Var& a) { return detail::unary(a, -a.v, -1.0); }

inline Var& operator+=(Var& a, const Var& b) { return a = a + b; }
inline Var& operator-=(Var& a, const Var& b) { return a = a - b; }
inline Var& operator*=(Var& a, const Var& b) { return a = a * b; }
inline Var& operator/=(Var& a, const Var& b) { return a = a / b; }

inline Var exp(const Var& x) {
  const double e = std::exp(x.v);
  return detail::unary(x, e, e);
}
inline Var log(const Var& x) { return detail::unary(x, std::log(x.v), 1.0 / x.v); }
inline Var tanh(const Var& x) {
  const double t = std::tanh(x.v);
  return detail::unary(x, t, 1.0 - t * t);
}
inline Var sqrt(const Var& x) {
  const double s = std::sqrt(x.v);
  return detail::unary(x, s, 0.5 / s);
}
inline Var pow(const Var& x, double p) {
  const double y = std::pow(x.v, p);
  return detail::unary(x, y, p * std::pow(x.v, p - 1.0));
}

inline Var sum(std::span<const Var> xs) {
  double s = 0.0;
  bool all_const = true;
  for (const auto& x : xs) {
    s += x.v;
    all_const = all_const && x.is_constant();
  }
  if (all_const) return Var(s);
  Tape& t = Tape::current();
  for (const auto& x : xs) t.arg(x, 1.0);
  return Var(s, t.close());
}

inline Var dot(std::span<const Var> a, std::span<const Var> b) {
  require_dims(b.size(), a.size(), "dot");
  double s = 0.0;
  bool all_const = true;
  for (std::size_t k = 0; k < a.size(); ++k) {
    s += a[k].v * b[k].v;
    all_const = all_const && a[k].is_constant() && b[k].is_constant();
  }
  if (all_const) return Var(s);
  Tape& t = Tape::current();
  for (std::size_t k = 0; k < a.size(); ++k) {
    t.arg(a[k], b[k].v);
    t.arg(b[k], a[k].v);
  }
  return Var(s, t.close());
}

/// Σ (a_k - b_k)^2 as a single node.
inline Var squared_distance(std::span<const Var> a, std::span<const Var> b) {
  require_dims(b.size(), a.size(), "squared_distance");
  double s = 0.0;
  bool all_const = true;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k].v - b[k].v;
    s += diff * diff;
    all_const = all_const && a[k].is_constant() && b[k].is_constant();
  }
  if (all_const) return Var(s);
  Tape& t = Tape::current();
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k].v - b[k].v;
    t.arg(a[k], 2.0 * diff);
    t.arg(b[k], -2.0 * diff);
  }
  return Var(s, t.close());
}

inline double value_of(const Var& x) { return x.v; }

}  // namespace pidkl::ad

namespace pidkl {

using ad::Var;

// Scalar-generic helpers so templated numerics compile for both double and Var.
inline double value_of(double x) { return x; }
using ad::value_of;

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_dims(b.size(), a.size(), "dot");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double sum(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_dims(b.size(), a.size(), "squared_distance");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

using ad::dot;
using ad::squared_distance;
using ad::sum;

/// Lower bound applied to every argument of the floored square root.
inline constexpr double kSqrtFloor = 1e-10;

inline double sqrt_floored(double x) { return std::sqrt(x < kSqrtFloor ? kSqrtFloor : x); }
inline Var sqrt_floored(const Var& x) {
  if (x.v < kSqrtFloor) return Var(std::sqrt(kSqrtFloor));
  return ad::sqrt(x);
}

}  // namespace pidkl
