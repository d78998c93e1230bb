#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "pidkl/fd_solvers.hpp"

using namespace pidkl;

namespace {

double ode_error(std::size_t n_points, std::size_t refinement) {
  OdeProblem p;
  p.n_points = n_points;
  p.refinement = refinement;
  const auto s = solve_ode(p);
  double err = 0.0;
  for (std::size_t i = 0; i < s.t.size(); ++i) err = std::max(err, std::abs(s.f[i] - (1.0 - 0.9 * std::exp(-s.t[i]))));
  return err;
}

const DiffusionSolution& benchmark_solution() {
  static const DiffusionSolution s = solve_diffusion(diffusion_benchmark());
  return s;
}

}  // namespace

TEST(Ode, MatchesAnalyticSolution) {
  const auto s = solve_ode(OdeProblem{});
  ASSERT_EQ(s.t.size(), 1001u);
  EXPECT_EQ(s.t.front(), 0.0);
  EXPECT_EQ(s.t.back(), 1.0);
  EXPECT_LE(ode_error(1001, 10), 1e-6);
}

TEST(Ode, FourthOrderConvergence) {
  double prev = ode_error(11, 1);
  for (std::size_t r : {2, 4, 8}) {
    const double e = ode_error(11, r);
    if (prev < 1e-12) break;
    EXPECT_GE(prev / e, 8.0) << r;
    prev = e;
  }
}

TEST(Ode, EquilibriumWithoutDynamics) {
  OdeProblem p;
  p.B = 0.0;
  p.D = 0.0;
  p.f0 = 0.37;
  for (double v : solve_ode(p).f) EXPECT_EQ(v, 0.37);
}

TEST(Ode, BenchmarkInitialValueAndBounded) {
  const auto s = solve_ode(ode_benchmark());
  EXPECT_EQ(s.f.front(), 0.1);
  for (double v : s.f) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_LT(std::abs(v), 2.0);
  }
}

TEST(Ode, RejectsBadGrid) {
  OdeProblem p;
  p.n_points = 1;
  EXPECT_THROW(solve_ode(p), ValidationError);
  p.n_points = 10;
  p.refinement = 0;
  EXPECT_THROW(solve_ode(p), ValidationError);
}

TEST(Diffusion, ConstantInitialConditionStays) {
  auto p = diffusion_benchmark();
  p.init = [](double) { return 0.4; };
  const auto s = solve_diffusion(p);
  for (const auto& row : s.f)
    for (double v : row) EXPECT_NEAR(v, 0.4, 1e-12);
}

TEST(Diffusion, MatchesCosineMode) {
  DiffusionProblem p;
  p.alpha = 0.1;
  p.init = [](double x) { return std::cos(std::numbers::pi * x); };
  const auto s = solve_diffusion(p);
  const double rate = p.alpha * std::numbers::pi * std::numbers::pi;
  for (std::size_t j = 0; j < s.t.size(); j += 10)
    for (std::size_t i = 0; i < s.x.size(); ++i)
      EXPECT_NEAR(s.f[j][i], std::exp(-rate * s.t[j]) * std::cos(std::numbers::pi * s.x[i]), 1e-4);
}

TEST(Diffusion, BenchmarkGridShape) {
  const auto& s = benchmark_solution();
  ASSERT_EQ(s.x.size(), 48u);
  ASSERT_EQ(s.t.size(), 101u);
  ASSERT_EQ(s.f.size(), 101u);
  EXPECT_EQ(s.x.front(), 0.0);
  EXPECT_EQ(s.x.back(), 1.0);
  EXPECT_NEAR(s.t[50], 0.5, 1e-15);
  const auto p = diffusion_benchmark();
  for (std::size_t i = 0; i < 48; ++i) EXPECT_EQ(s.f[0][i], p.init(s.x[i]));
}

TEST(Diffusion, MaximumPrinciple) {
  for (const auto& row : benchmark_solution().f)
    for (double v : row) {
      EXPECT_GE(v, -1e-8);
      EXPECT_LE(v, 1.0 + 1e-8);
    }
}

TEST(Diffusion, MassConserved) {
  const auto& s = benchmark_solution();
  ASSERT_EQ(s.fine_mass.size(), s.t.size());
  for (double m : s.fine_mass) EXPECT_NEAR(m, s.fine_mass.front(), 1e-8);
}

TEST(Diffusion, UniformAtFinalTime) {
  const auto& s = benchmark_solution();
  const auto [lo0, hi0] = std::minmax_element(s.f.front().begin(), s.f.front().end());
  const auto [lo, hi] = std::minmax_element(s.f.back().begin(), s.f.back().end());
  EXPECT_LE(*hi - *lo, 1e-3 * (*hi0 - *lo0));
}

TEST(Diffusion, StableStepRatio) {
  const auto& s = benchmark_solution();
  EXPECT_LE(s.lambda, 1.0);
  EXPECT_EQ(s.refine_t % 10, 0u);
  EXPECT_NEAR(s.lambda, diffusion_benchmark().lambda(), 1e-15);
}

TEST(Diffusion, SchemeResidual) {
  EXPECT_LE(benchmark_solution().max_step_residual, 1e-10);
}

TEST(Diffusion, OutputGridResidualAfterSmoothing) {
  // Centered differences on the output grid cannot resolve the initial jump.
  const auto& s = benchmark_solution();
  const double alpha = diffusion_benchmark().alpha;
  const double dx = s.x[1] - s.x[0];
  const double dt = s.t[1] - s.t[0];
  for (std::size_t j = 4; j + 1 < s.t.size(); ++j)
    for (std::size_t i = 1; i + 1 < s.x.size(); ++i) {
      const double ft = (s.f[j + 1][i] - s.f[j - 1][i]) / (2 * dt);
      const double fxx = (s.f[j][i + 1] - 2 * s.f[j][i] + s.f[j][i - 1]) / (dx * dx);
      EXPECT_LE(std::abs(ft - alpha * fxx), 1e-3) << j << "," << i;
    }
}

TEST(Diffusion, RejectsBadProblem) {
  DiffusionProblem p;
  p.alpha = 0.0;
  EXPECT_THROW(solve_diffusion(p), ValidationError);
  p.alpha = 1.0;
  p.nx = 2;
  EXPECT_THROW(solve_diffusion(p), ValidationError);
}

TEST(Datasets, OdeRowOrder) {
  const auto d = to_dataset(solve_ode(ode_benchmark()));
  ASSERT_EQ(d.size(), 1001u);
  EXPECT_EQ(d.dim(), 1u);
  for (std::size_t i = 1; i < d.size(); ++i) EXPECT_GT(d.x(i, 0), d.x(i - 1, 0));
  EXPECT_EQ(d.bounds[0].lo, 0.0);
  EXPECT_EQ(d.bounds[0].hi, 1.0);
}

TEST(Datasets, DiffusionRowOrder) {
  const auto& s = benchmark_solution();
  const auto d = to_dataset(s);
  ASSERT_EQ(d.size(), 48u * 101u);
  for (std::size_t j : {0, 37, 100})
    for (std::size_t i : {0, 5, 47}) {
      const std::size_t r = j * 48 + i;
      EXPECT_EQ(d.x(r, 0), s.x[i]);
      EXPECT_EQ(d.x(r, 1), s.t[j]);
      EXPECT_EQ(d.y[r], s.f[j][i]);
    }
}

TEST(Splits, OdeExtrapolation) {
  const auto all = to_dataset(solve_ode(ode_benchmark()));
  const auto spec = SplitSpec::parse("ode-extrapolation");
  const auto s = export_dataset(all, spec);
  EXPECT_EQ(s.train.size(), 101u);
  EXPECT_EQ(s.test.size(), 900u);
  for (std::size_t i = 0; i < s.train.size(); ++i) EXPECT_LE(s.train.x(i, 0), 0.1 + 1e-12);
  for (std::size_t i = 0; i < s.test.size(); ++i) EXPECT_GT(s.test.x(i, 0), 0.1);
  const auto meta = metadata(ode_benchmark(), s, spec);
  EXPECT_EQ(meta["split"]["train_rows"], 101);
  EXPECT_EQ(meta["f0"], 0.1);
}

TEST(Splits, DiffusionSlice) {
  const auto& sol = benchmark_solution();
  const auto all = to_dataset(sol);
  const auto spec = SplitSpec::parse("diffusion-slice");
  const auto s = export_dataset(all, spec);
  EXPECT_EQ(s.train.size(), 48u);
  EXPECT_EQ(s.test.size(), 4848u);
  for (std::size_t i = 0; i < 48; ++i) EXPECT_NEAR(s.train.x(i, 1), 0.5, 1e-15);
  const auto meta = metadata(diffusion_benchmark(), sol, s, spec);
  EXPECT_EQ(meta["solver"]["refine_t"], sol.refine_t);
  EXPECT_EQ(meta["alpha"], 10.0);
}

TEST(Splits, Custom) {
  const auto all = to_dataset(solve_ode(ode_benchmark()));
  SplitSpec spec;
  spec.train = {0, 1};
  const auto s = export_dataset(all, spec);
  EXPECT_EQ(s.train.size(), 2u);
  EXPECT_EQ(s.test.size(), 999u);
  EXPECT_EQ(s.train.y[1], all.y[1]);
  spec.test = {5, 6, 7};
  EXPECT_EQ(export_dataset(all, spec).test.size(), 3u);
}

TEST(Splits, Invalid) {
  const auto all = to_dataset(solve_ode(ode_benchmark()));
  EXPECT_THROW(SplitSpec::parse("random"), InvalidSplit);
  SplitSpec spec;
  EXPECT_THROW(export_dataset(all, spec), InvalidSplit);
  spec.train = {1001};
  EXPECT_THROW(export_dataset(all, spec), InvalidSplit);
  spec.train = {3, 3};
  EXPECT_THROW(export_dataset(all, spec), InvalidSplit);
  EXPECT_THROW(export_dataset(all, SplitSpec::parse("diffusion-slice")), InvalidSplit);
  EXPECT_THROW(export_dataset(to_dataset(benchmark_solution()), SplitSpec::parse("ode-extrapolation")), InvalidSplit);
}
