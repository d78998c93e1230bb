#include <cmath>
#include <random>
#include <span>
#include <vector>

#include <gtest/gtest.h>

#include "pidkl/kernels.hpp"

using namespace pidkl;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

// Independent matrix-multiply MLP.
std::vector<double> mlp_oracle(const std::vector<double>& x, const MlpParams<double>& p) {
  std::vector<double> h = x;
  for (const auto& l : p.layers) {
    std::vector<double> next(l.out);
    for (std::size_t j = 0; j < l.out; ++j) {
      double s = l.bias[j];
      for (std::size_t i = 0; i < l.in; ++i) s += l.weight[j * l.in + i] * h[i];
      next[j] = std::tanh(s);
    }
    h = next;
  }
  return h;
}

double rbf_oracle(const std::vector<double>& a, const std::vector<double>& b, double eta, double s2) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += (a[k] - b[k]) * (a[k] - b[k]);
  return s2 * std::exp(-d / eta);
}

MlpParams<double> zero_mlp(std::size_t d, const std::vector<std::size_t>& widths) {
  std::mt19937_64 rng(0);
  auto p = make_mlp(d, widths, rng);
  for (auto& l : p.layers) {
    for (auto& w : l.weight) w = 0.0;
  }
  return p;
}

}  // namespace

TEST(Rbf, Examples) {
  const std::vector<double> a{0.3, -1.0};
  const RbfParams<double> p{std::log(2.0), 0.0};
  EXPECT_EQ(rbf_eval<double>(a, a, p), 1.0);
  const std::vector<double> b{0.3 + std::sqrt(2.0), -1.0};
  EXPECT_NEAR(rbf_eval<double>(a, b, p), std::exp(-1.0), 1e-15);
  EXPECT_NEAR(std::exp(-1.0), 0.367879, 1e-6);
}

TEST(Rbf, MatchesOracleAndSymmetric) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_vec(3, rng);
    const auto b = random_vec(3, rng);
    const RbfParams<double> p{0.4, -0.3};
    const double v = rbf_eval<double>(a, b, p);
    EXPECT_NEAR(v, rbf_oracle(a, b, std::exp(0.4), std::exp(-0.3)), 1e-12);
    EXPECT_EQ(v, rbf_eval<double>(b, a, p));
  }
}

TEST(Rbf, DimensionMismatch) {
  const std::vector<double> a{1.0};
  const std::vector<double> b{1.0, 2.0};
  EXPECT_THROW(rbf_eval<double>(a, b, RbfParams<double>{}), DimensionMismatch);
}

TEST(Ard, Examples) {
  const std::vector<double> a{0.1, 0.2, 0.3};
  const std::vector<double> b{-0.5, 0.9, 1.3};
  ArdParams<double> p{{0.7, 0.7, 0.7}, 0.25};
  EXPECT_DOUBLE_EQ(ard_eval<double>(a, a, p), std::exp(0.25));
  EXPECT_NEAR(ard_eval<double>(a, b, p), rbf_eval<double>(a, b, RbfParams<double>{0.7, 0.25}), 1e-15);
}

TEST(Ard, MatchesExplicitSum) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto a = random_vec(3, rng);
    const auto b = random_vec(3, rng);
    const auto ls = random_vec(3, rng);
    ArdParams<double> p{ls, 0.1};
    double s = 0.0;
    for (int k = 0; k < 3; ++k) s += (a[k] - b[k]) * (a[k] - b[k]) / std::exp(ls[k]);
    const double v = ard_eval<double>(a, b, p);
    EXPECT_NEAR(v, std::exp(0.1) * std::exp(-s), 1e-12);
    EXPECT_EQ(v, ard_eval<double>(b, a, p));
  }
}

TEST(Mlp, Shapes) {
  std::mt19937_64 rng(3);
  const auto p = make_mlp(2, default_mlp_widths(), rng);
  ASSERT_EQ(p.layers.size(), 5u);
  EXPECT_EQ(p.layers[0].in, 2u);
  for (std::size_t l = 1; l < p.layers.size(); ++l) EXPECT_EQ(p.layers[l].in, p.layers[l - 1].out);
  EXPECT_EQ(p.output_dim(), 20u);
  const double bound = std::sqrt(6.0 / 22.0);
  for (double w : p.layers[0].weight) EXPECT_LE(std::abs(w), bound);
  for (double b : p.layers[0].bias) EXPECT_EQ(b, 0.0);
}

TEST(Mlp, ZeroWeightsGiveZeroFeatures) {
  const auto p = zero_mlp(2, {20, 20});
  const std::vector<double> x{0.7, -3.0};
  for (double v : mlp_forward<double>(x, p)) EXPECT_EQ(v, 0.0);
}

TEST(Mlp, HandEvaluatedChain) {
  MlpParams<double> p;
  p.layers.push_back({1, 1, {1.0}, {0.0}});
  p.layers.push_back({1, 1, {1.0}, {0.0}});
  const std::vector<double> x{0.5};
  EXPECT_DOUBLE_EQ(mlp_forward<double>(x, p)[0], std::tanh(std::tanh(0.5)));
}

TEST(Mlp, MatchesOracle) {
  std::mt19937_64 rng(4);
  const auto p = make_mlp(3, {7, 5, 4}, rng);
  auto q = p;
  std::normal_distribution<double> g(0.0, 0.3);
  for (auto& l : q.layers)
    for (auto& b : l.bias) b = g(rng);
  for (int t = 0; t < 20; ++t) {
    const auto x = random_vec(3, rng);
    const auto got = mlp_forward<double>(x, q);
    const auto want = mlp_oracle(x, q);
    for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], want[k], 1e-12);
  }
}

TEST(Mlp, DimensionMismatch) {
  std::mt19937_64 rng(5);
  const auto p = make_mlp(2, {3}, rng);
  const std::vector<double> x{1.0};
  EXPECT_THROW(mlp_forward<double>(x, p), DimensionMismatch);
}

TEST(DeepKernel, Examples) {
  std::mt19937_64 rng(6);
  const auto mlp = make_mlp(2, {5, 5}, rng);
  const RbfParams<double> base{0.3, 0.8};
  const std::vector<double> a{0.1, 0.9};
  EXPECT_DOUBLE_EQ(deep_kernel_eval<double>(a, a, mlp, base), std::exp(0.8));
  const auto zero = zero_mlp(2, {5, 5});
  const std::vector<double> b{-4.0, 2.0};
  EXPECT_DOUBLE_EQ(deep_kernel_eval<double>(a, b, zero, base), std::exp(0.8));
}

TEST(DeepKernel, CompositionOfOracles) {
  std::mt19937_64 rng(7);
  const auto mlp = make_mlp(2, {6, 6}, rng);
  const RbfParams<double> base{-0.2, 0.1};
  for (int t = 0; t < 20; ++t) {
    const auto a = random_vec(2, rng);
    const auto b = random_vec(2, rng);
    const double v = deep_kernel_eval<double>(a, b, mlp, base);
    EXPECT_NEAR(v, rbf_oracle(mlp_oracle(a, mlp), mlp_oracle(b, mlp), std::exp(-0.2), std::exp(0.1)), 1e-12);
    EXPECT_EQ(v, deep_kernel_eval<double>(b, a, mlp, base));
  }
}

TEST(Gram, Examples) {
  const RbfParams<double> p{0.0, std::log(1.5)};
  auto k = [&](std::span<const double> a, std::span<const double> b) { return rbf_eval(a, b, p); };
  Matrix<double> one(1, 2);
  one(0, 0) = 0.2;
  one(0, 1) = 0.4;
  EXPECT_DOUBLE_EQ(gram_matrix(one, k)(0, 0), 1.5);

  Matrix<double> two(2, 2);
  for (std::size_t i = 0; i < 2; ++i) {
    two(i, 0) = 0.2;
    two(i, 1) = 0.4;
  }
  const auto g2 = gram_matrix(two, k);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(g2(i, j), 1.5);

  EXPECT_THROW(gram_matrix(Matrix<double>(0, 2), k), DimensionMismatch);
}

TEST(Gram, MatchesDoubleLoop) {
  std::mt19937_64 rng(8);
  const auto mlp = make_mlp(3, {4, 4}, rng);
  const RbfParams<double> base{0.0, 0.0};
  Matrix<double> x(4, 3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& v : x.data()) v = g(rng);
  const auto k = gram_matrix(x, [&](std::span<const double> a, std::span<const double> b) {
    return deep_kernel_eval(a, b, mlp, base);
  });
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(k(i, j), k(j, i));
      EXPECT_EQ(k(i, j), deep_kernel_eval<double>(x.row(i), x.row(j), mlp, base));
    }
}

TEST(Gram, JitteredFactorizationAlwaysSucceeds) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 30; ++t) {
    const auto mlp = make_mlp(1, {8, 8}, rng);
    const RbfParams<double> base{u(rng), u(rng)};
    Matrix<double> x(25, 1);
    for (auto& v : x.data()) v = u(rng);
    auto k = gram_matrix(x, [&](std::span<const double> a, std::span<const double> b) {
      return deep_kernel_eval(a, b, mlp, base);
    });
    EXPECT_NO_THROW(cholesky_jittered(k, 0.0));
  }
}

TEST(KernelJets, MatchFiniteDifferences) {
  // Jets through the deep kernel in the first argument against central differences.
  std::mt19937_64 rng(10);
  const auto mlp = make_mlp(2, {6, 6}, rng);
  const std::vector<double> xj{0.3, -0.4};
  const auto fj = mlp_forward<double>(xj, mlp);
  const double eta = 0.7;
  auto plain = [&](std::span<const double> x) { return rbf_oracle(mlp_oracle({x[0], x[1]}, mlp), fj, eta, 1.0); };
  const std::vector<double> x0{0.1, 0.2};
  const Jet2<double> out = jet_eval(
      [&](std::span<const Jet2<double>> x) {
        JetVec<double> in(2, 2);
        in.set(0, x[0]);
        in.set(1, x[1]);
        const JetVec<double> f = mlp_forward(in, mlp);
        Jet2<double> d2(2, 0.0);
        for (std::size_t k = 0; k < f.size(); ++k) {
          const Jet2<double> diff = f.at(k) - fj[k];
          d2 = d2 + diff * diff;
        }
        return exp(-(d2 / eta));
      },
      std::span<const double>(x0));
  EXPECT_NEAR(out.value(), plain(x0), 1e-14);
  const double h = 1e-4;
  for (int i = 0; i < 2; ++i) {
    auto xp = x0;
    auto xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (plain(xp) - plain(xm)) / (2 * h);
    EXPECT_LE(std::abs(out.grad(i) - fd), 1e-6 * std::max(1.0, std::abs(fd)));
    const double h2 = 1e-3;
    xp = x0;
    xm = x0;
    xp[i] += h2;
    xm[i] -= h2;
    const double fd2 = (plain(xp) - 2 * plain(x0) + plain(xm)) / (h2 * h2);
    EXPECT_LE(std::abs(out.hess(i, i) - fd2), 1e-4 * std::max(1.0, std::abs(fd2)));
  }
}
