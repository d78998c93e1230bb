#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <gtest/gtest.h>

#include "pidkl/autodiff.hpp"

using namespace pidkl;

namespace {

using J = Jet2<double>;
using JetFn = std::function<J(std::span<const J>)>;
using PlainFn = std::function<double(std::span<const double>)>;

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

double fd_grad(const PlainFn& f, std::vector<double> x, std::size_t i, double h) {
  x[i] += h;
  const double up = f(x);
  x[i] -= 2 * h;
  const double dn = f(x);
  return (up - dn) / (2 * h);
}

double fd_hess(const PlainFn& f, std::vector<double> x, std::size_t i, std::size_t j, double h) {
  auto at = [&](double di, double dj) {
    auto y = x;
    y[i] += di;
    y[j] += dj;
    return f(y);
  };
  return (at(h, h) - at(h, -h) - at(-h, h) + at(-h, -h)) / (4 * h * h);
}

void check_against_fd(const JetFn& jf, const PlainFn& pf, const std::vector<double>& x) {
  const J out = jet_eval(jf, std::span<const double>(x));
  EXPECT_NEAR(out.value(), pf(x), 1e-14 * std::max(1.0, std::abs(out.value())));
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_LE(rel_err(out.grad(static_cast<int>(i)), fd_grad(pf, x, i, 1e-4)), 1e-6) << "grad " << i;
    for (std::size_t j = i; j < x.size(); ++j) {
      EXPECT_LE(rel_err(out.hess(static_cast<int>(i), static_cast<int>(j)), fd_hess(pf, x, i, j, 1e-3)), 1e-4)
          << "hess " << i << ',' << j;
    }
  }
}

}  // namespace

TEST(Jet, SquareAtThree) {
  const std::vector<double> x{3.0};
  const J out = jet_eval([](std::span<const J> v) { return v[0] * v[0]; }, std::span<const double>(x));
  EXPECT_DOUBLE_EQ(out.value(), 9.0);
  EXPECT_DOUBLE_EQ(out.grad(0), 6.0);
  EXPECT_DOUBLE_EQ(out.hess(0, 0), 2.0);
}

TEST(Jet, GaussianBump) {
  const std::vector<double> x{1.0};
  const J out = jet_eval([](std::span<const J> v) { return exp(-(v[0] * v[0])); }, std::span<const double>(x));
  const double e = std::exp(-1.0);
  EXPECT_NEAR(out.value(), e, 1e-15);
  EXPECT_NEAR(out.grad(0), -2 * e, 1e-15);
  EXPECT_NEAR(out.hess(0, 0), 2 * e, 1e-15);
}

TEST(Jet, PrimitivesMatchFiniteDifferences) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.3, 1.7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::vector<double> x{u(rng), u(rng), u(rng)};
    check_against_fd([](std::span<const J> v) { return v[0] + v[1] - v[2]; },
                     [](std::span<const double> v) { return v[0] + v[1] - v[2]; }, x);
    check_against_fd([](std::span<const J> v) { return v[0] * v[1] * v[2]; },
                     [](std::span<const double> v) { return v[0] * v[1] * v[2]; }, x);
    check_against_fd([](std::span<const J> v) { return v[0] / (v[1] + v[2]); },
                     [](std::span<const double> v) { return v[0] / (v[1] + v[2]); }, x);
    check_against_fd([](std::span<const J> v) { return exp(v[0] * v[1]); },
                     [](std::span<const double> v) { return std::exp(v[0] * v[1]); }, x);
    check_against_fd([](std::span<const J> v) { return log(v[0] + v[2] * v[2]); },
                     [](std::span<const double> v) { return std::log(v[0] + v[2] * v[2]); }, x);
    check_against_fd([](std::span<const J> v) { return tanh(v[0] - 2.0 * v[1]); },
                     [](std::span<const double> v) { return std::tanh(v[0] - 2.0 * v[1]); }, x);
    check_against_fd([](std::span<const J> v) { return sqrt_floored(v[0] * v[1] + v[2]); },
                     [](std::span<const double> v) { return std::sqrt(v[0] * v[1] + v[2]); }, x);
    check_against_fd([](std::span<const J> v) { return pow(v[0] + v[1], 2.5); },
                     [](std::span<const double> v) { return std::pow(v[0] + v[1], 2.5); }, x);
  }
}

TEST(Jet, NonFiniteResultIsReported) {
  const std::vector<double> x{0.0};
  EXPECT_THROW(jet_eval([](std::span<const J> v) { return log(v[0]); }, std::span<const double>(x)),
               NonFiniteIntermediate);
  const std::vector<double> bad{std::nan("")};
  EXPECT_THROW(jet_eval([](std::span<const J> v) { return v[0]; }, std::span<const double>(bad)),
               NonFiniteIntermediate);
}

TEST(Jet, SqrtIsFloored) {
  const std::vector<double> x{0.0};
  const J out = jet_eval([](std::span<const J> v) { return sqrt_floored(v[0]); }, std::span<const double>(x));
  EXPECT_DOUBLE_EQ(out.value(), std::sqrt(kSqrtFloor));
}

TEST(Jet, TooManyInputs) {
  const std::vector<double> x(kMaxJetDim + 1, 0.5);
  EXPECT_THROW(jet_eval([](std::span<const J> v) { return v[0]; }, std::span<const double>(x)), DimensionMismatch);
}

TEST(Tape, SquareGradient) {
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const Var x = tape.variable(3.0);
  const Var y = x * x;
  EXPECT_DOUBLE_EQ(y.v, 9.0);
  EXPECT_DOUBLE_EQ(tape.gradient(y, 1)[0], 6.0);
}

TEST(Tape, GradientsOfPrimitivesMatchFiniteDifferences) {
  auto plain = [](double a, double b) {
    return std::exp(a) * std::log(b) + std::tanh(a * b) / std::sqrt(b) + std::pow(a, 3.0) - a / b;
  };
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const double a0 = 0.7;
  const double b0 = 1.9;
  const Var a = tape.variable(a0);
  const Var b = tape.variable(b0);
  const Var out = exp(a) * log(b) + tanh(a * b) / sqrt(b) + pow(a, 3.0) - a / b;
  const auto g = tape.gradient(out, 2);
  const double h = 1e-6;
  EXPECT_LE(rel_err(g[0], (plain(a0 + h, b0) - plain(a0 - h, b0)) / (2 * h)), 1e-8);
  EXPECT_LE(rel_err(g[1], (plain(a0, b0 + h) - plain(a0, b0 - h)) / (2 * h)), 1e-8);
}

TEST(Tape, GradientThroughJetComponents) {
  // d/dθ of ∂²/∂x² exp(θ·x²) at x = 0.5 is ∂/∂θ [(2θ + 4θ²x²) e^{θx²}].
  const double theta0 = 0.8;
  const double x0 = 0.5;
  ad::Tape tape;
  ad::TapeScope scope(tape);
  const Var theta = tape.variable(theta0);
  const Jet2<Var> x = Jet2<Var>::variable(1, 0, Var(x0));
  const Jet2<Var> f = exp(x * x * theta);
  const auto g = tape.gradient(f.hess(0, 0), 1);
  auto second = [&](double t) { return (2 * t + 4 * t * t * x0 * x0) * std::exp(t * x0 * x0); };
  const double h = 1e-6;
  EXPECT_NEAR(f.hess(0, 0).v, second(theta0), 1e-13);
  EXPECT_LE(rel_err(g[0], (second(theta0 + h) - second(theta0 - h)) / (2 * h)), 1e-8);
}

namespace {

ModelParams<double> small_params() {
  std::mt19937_64 rng(3);
  ModelParams<double> p;
  p.kind = KernelKind::deep;
  p.mlp = make_mlp(1, {3, 2}, rng);
  p.base.log_lengthscale = 0.2;
  p.base.log_signal_variance = -0.1;
  p.source.log_lengthscales = {-1.0};
  p.source.log_signal_variance = 0.0;
  p.log_tau = 2.0;
  p.eq_coeffs = {{"B", 0.5, false}};
  return p;
}

}  // namespace

TEST(ParamGradient, ScalarSquare) {
  ModelParams<double> p = small_params();
  const auto names = param_names(p);
  const std::size_t idx = names.size() - 1;  // eq.B
  auto flat = flatten(p);
  flat[idx] = 3.0;
  p = unflatten(p, flat);
  const auto [v, g] = param_gradient([](const ModelParams<Var>& q) { return q.eq_coeffs[0].raw * q.eq_coeffs[0].raw; }, p);
  EXPECT_DOUBLE_EQ(v, 9.0);
  EXPECT_DOUBLE_EQ(g[idx], 6.0);
}

TEST(ParamGradient, IgnoredParameterHasExactZero) {
  const ModelParams<double> p = small_params();
  const auto [v, g] = param_gradient(
      [](const ModelParams<Var>& q) { return exp(q.log_tau) + q.mlp.layers[0].weight[1] * q.base.log_lengthscale; }, p);
  (void)v;
  const auto names = param_names(p);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == "log_tau[0]" || names[i] == "mlp.0.weight[1]" || names[i] == "base.log_lengthscale[0]") {
      EXPECT_NE(g[i], 0.0) << names[i];
    } else {
      EXPECT_EQ(g[i], 0.0) << names[i];
    }
  }
}

TEST(ParamGradient, Linearity) {
  const ModelParams<double> p = small_params();
  auto f = [](const ModelParams<Var>& q) { return exp(q.base.log_signal_variance) * tanh(q.mlp.layers[1].bias[0] + 0.3); };
  auto g = [](const ModelParams<Var>& q) { return log(exp(q.log_tau) + q.source.log_lengthscales[0] * q.source.log_lengthscales[0]); };
  const double a = 2.0;
  const double b = -0.5;
  const auto gf = param_gradient(f, p).second;
  const auto gg = param_gradient(g, p).second;
  const auto gc = param_gradient([&](const ModelParams<Var>& q) { return Var(a) * f(q) + Var(b) * g(q); }, p).second;
  for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gg[i], 1e-15 * (1 + std::abs(gc[i])));
}

TEST(ParamGradient, Deterministic) {
  const ModelParams<double> p = small_params();
  auto loss = [](const ModelParams<Var>& q) {
    const std::vector<Var> x{Var(0.4)};
    const auto out = mlp_forward(std::span<const Var>(x), q.mlp);
    return dot(std::span<const Var>(out), std::span<const Var>(out)) * exp(q.base.log_lengthscale);
  };
  ad::Tape tape;
  const auto a = param_gradient(loss, p, tape);
  const auto b = param_gradient(loss, p, tape);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(ParamGradient, NonFiniteLossThrows) {
  const ModelParams<double> p = small_params();
  EXPECT_THROW(param_gradient([](const ModelParams<Var>& q) { return log(q.mlp.layers[0].bias[0]); }, p),
               NonFiniteGradient);
}
