#pragma once

// Reference solvers for the synthetic benchmarks:
//   ∂f/∂t + B·f − D = g(t)          classical RK4 on a refined grid
//   ∂f/∂t − α ∂²f/∂x² = g(x, t)     Crank–Nicolson, homogeneous Neumann ends
// and the train/test splits drawn from their output grids.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidkl/data.hpp"
#include "pidkl/errors.hpp"

namespace pidkl {

struct OdeProblem {
  double B = 1.0;
  double D = 1.0;
  std::function<double(double)> g = [](double) { return 0.0; };
  std::string g_label = "0";
  double f0 = 0.1;
  Interval t_range{0.0, 1.0};
  std::size_t n_points = 1001;
  std::size_t refinement = 10;

  void validate() const {
    if (n_points < 2) throw ValidationError("ode: n_points must be >= 2");
    if (refinement < 1) throw ValidationError("ode: refinement must be >= 1");
    if (!(t_range.lo < t_range.hi)) throw ValidationError("ode: empty time range");
    if (!g) throw ValidationError("ode: missing source g");
  }
};

/// sin(2πt)·e^{−t}
inline double ode_benchmark_source(double t) { return std::sin(2.0 * std::numbers::pi * t) * std::exp(-t); }

inline OdeProblem ode_benchmark() {
  OdeProblem p;
  p.g = ode_benchmark_source;
  p.g_label = "sin(2*pi*t)*exp(-t)";
  return p;
}

struct OdeSolution {
  std::vector<double> t;
  std::vector<double> f;
};

inline OdeSolution solve_ode(const OdeProblem& p) {
  p.validate();
  const std::size_t steps = (p.n_points - 1) * p.refinement;
  const double h = (p.t_range.hi - p.t_range.lo) / static_cast<double>(steps);
  auto rhs = [&](double t, double f) { return p.D - p.B * f + p.g(t); };
  OdeSolution s;
  s.t.resize(p.n_points);
  s.f.resize(p.n_points);
  double f = p.f0;
  s.t[0] = p.t_range.lo;
  s.f[0] = f;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t = p.t_range.lo + static_cast<double>(k) * h;
    const double k1 = rhs(t, f);
    const double k2 = rhs(t + 0.5 * h, f + 0.5 * h * k1);
    const double k3 = rhs(t + 0.5 * h, f + 0.5 * h * k2);
    const double k4 = rhs(t + h, f + h * k3);
    f += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if ((k + 1) % p.refinement == 0) {
      const std::size_t i = (k + 1) / p.refinement;
      s.t[i] = p.t_range.lo + (p.t_range.hi - p.t_range.lo) * static_cast<double>(i) / static_cast<double>(p.n_points - 1);
      s.f[i] = f;
    }
  }
  return s;
}

struct DiffusionProblem {
  double alpha = 10.0;
  std::function<double(double, double)> source = [](double, double) { return 0.0; };
  std::function<double(double)> init = [](double) { return 0.0; };
  std::string init_label = "0";
  Interval x_range{0.0, 1.0};
  Interval t_range{0.0, 1.0};
  std::size_t nx = 48;
  std::size_t nt = 101;
  std::size_t refine_x = 4;
  std::size_t refine_t = 0;  // 0: smallest multiple of 10 with α·Δt/Δx² ≤ 1

  void validate() const {
    if (nx < 3 || nt < 2) throw ValidationError("diffusion: grid needs nx >= 3 and nt >= 2");
    if (refine_x < 1) throw ValidationError("diffusion: refine_x must be >= 1");
    if (!(alpha > 0.0)) throw ValidationError("diffusion: alpha must be > 0");
    if (!(x_range.lo < x_range.hi) || !(t_range.lo < t_range.hi)) throw ValidationError("diffusion: empty domain");
    if (!source || !init) throw ValidationError("diffusion: missing source or initial condition");
  }

  [[nodiscard]] std::size_t fine_nx() const { return (nx - 1) * refine_x + 1; }
  [[nodiscard]] double fine_dx() const { return (x_range.hi - x_range.lo) / static_cast<double>(fine_nx() - 1); }
  [[nodiscard]] double output_dt() const { return (t_range.hi - t_range.lo) / static_cast<double>(nt - 1); }

  [[nodiscard]] std::size_t effective_refine_t() const {
    if (refine_t > 0) return refine_t;
    const double dx = fine_dx();
    const double needed = alpha * output_dt() / (dx * dx);
    auto r = static_cast<std::size_t>(std::ceil(needed / 10.0 - 1e-12)) * 10;
    return std::max<std::size_t>(r, 10);
  }

  [[nodiscard]] double lambda() const {
    const double dx = fine_dx();
    return alpha * output_dt() / static_cast<double>(effective_refine_t()) / (dx * dx);
  }
};

/// 1 on [0.25, 0.75], 0 elsewhere.
inline double square_wave(double x) { return (x >= 0.25 && x <= 0.75) ? 1.0 : 0.0; }

inline DiffusionProblem diffusion_benchmark() {
  DiffusionProblem p;
  p.init = square_wave;
  p.init_label = "square wave: 1 on [0.25, 0.75], 0 elsewhere";
  return p;
}

struct DiffusionSolution {
  std::vector<double> x;              // nx
  std::vector<double> t;              // nt
  std::vector<std::vector<double>> f; // f[j][i] at (x_i, t_j)
  std::vector<double> fine_mass;      // trapezoidal mean on the internal grid at each output time
  double max_step_residual = 0.0;     // largest Crank–Nicolson equation residual over all steps
  std::size_t refine_t = 0;
  double lambda = 0.0;
};

namespace detail {

/// Thomas algorithm for a tridiagonal system; sub/diag/super have length n.
inline void solve_tridiagonal(const std::vector<double>& sub, const std::vector<double>& diag,
                              const std::vector<double>& super, std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  std::vector<double> c(n);
  double denom = diag[0];
  c[0] = super[0] / denom;
  rhs[0] /= denom;
  for (std::size_t i = 1; i < n; ++i) {
    denom = diag[i] - sub[i] * c[i - 1];
    c[i] = super[i] / denom;
    rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / denom;
  }
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] -= c[i] * rhs[i + 1];
}

inline double trapezoid_mean(const std::vector<double>& u) {
  double s = 0.5 * (u.front() + u.back());
  for (std::size_t i = 1; i + 1 < u.size(); ++i) s += u[i];
  return s / static_cast<double>(u.size() - 1);
}

}  // namespace detail

/// Neumann ends use a reflected ghost node, so (Lu)_0 = 2(u_1 − u_0)/Δx².
inline DiffusionSolution solve_diffusion(const DiffusionProblem& p) {
  p.validate();
  const std::size_t n = p.fine_nx();
  const double dx = p.fine_dx();
  const std::size_t rt = p.effective_refine_t();
  const double dt = p.output_dt() / static_cast<double>(rt);
  const double lam = p.alpha * dt / (dx * dx);

  DiffusionSolution s;
  s.refine_t = rt;
  s.lambda = lam;
  for (std::size_t i = 0; i < p.nx; ++i) {
    s.x.push_back(p.x_range.lo + (p.x_range.hi - p.x_range.lo) * static_cast<double>(i) / static_cast<double>(p.nx - 1));
  }
  for (std::size_t j = 0; j < p.nt; ++j) {
    s.t.push_back(p.t_range.lo + (p.t_range.hi - p.t_range.lo) * static_cast<double>(j) / static_cast<double>(p.nt - 1));
  }
  std::vector<double> xf(n);
  for (std::size_t i = 0; i < n; ++i) xf[i] = p.x_range.lo + dx * static_cast<double>(i);

  auto laplacian = [&](const std::vector<double>& u, std::size_t i) {
    const double left = i == 0 ? u[1] : u[i - 1];
    const double right = i + 1 == n ? u[n - 2] : u[i + 1];
    return left - 2.0 * u[i] + right;
  };
  auto restrict_output = [&](const std::vector<double>& u) {
    std::vector<double> out(p.nx);
    for (std::size_t i = 0; i < p.nx; ++i) out[i] = u[i * p.refine_x];
    return out;
  };

  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = p.init(xf[i]);
  s.f.push_back(restrict_output(u));
  s.fine_mass.push_back(detail::trapezoid_mean(u));

  // (I − λ/2·L) u⁺ = (I + λ/2·L) u + Δt·(g⁺ + g)/2
  std::vector<double> sub(n, -0.5 * lam), diag(n, 1.0 + lam), super(n, -0.5 * lam);
  sub[0] = 0.0;
  super[0] = -lam;
  sub[n - 1] = -lam;
  super[n - 1] = 0.0;

  std::vector<double> rhs(n);
  const std::size_t steps = (p.nt - 1) * rt;
  for (std::size_t k = 0; k < steps; ++k) {
    const double t0 = p.t_range.lo + dt * static_cast<double>(k);
    const double t1 = t0 + dt;
    for (std::size_t i = 0; i < n; ++i) {
      rhs[i] = u[i] + 0.5 * lam * laplacian(u, i) + 0.5 * dt * (p.source(xf[i], t0) + p.source(xf[i], t1));
    }
    const std::vector<double> rhs_copy = rhs;
    detail::solve_tridiagonal(sub, diag, super, rhs);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = rhs[i] - 0.5 * lam * laplacian(rhs, i) - rhs_copy[i];
      s.max_step_residual = std::max(s.max_step_residual, std::abs(r));
    }
    u.swap(rhs);
    if ((k + 1) % rt == 0) {
      s.f.push_back(restrict_output(u));
      s.fine_mass.push_back(detail::trapezoid_mean(u));
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Datasets and splits

/// Output grid as a dataset; one row per t.
inline Dataset to_dataset(const OdeSolution& s) {
  Dataset d;
  d.x = Matrix<double>(s.t.size(), 1);
  for (std::size_t i = 0; i < s.t.size(); ++i) d.x(i, 0) = s.t[i];
  d.y = s.f;
  d.bounds = {{s.t.front(), s.t.back()}};
  return d;
}

/// Output grid as a dataset with columns (x, t); row j·nx + i holds (x_i, t_j).
inline Dataset to_dataset(const DiffusionSolution& s) {
  Dataset d;
  const std::size_t nx = s.x.size();
  d.x = Matrix<double>(nx * s.t.size(), 2);
  d.y.resize(nx * s.t.size());
  for (std::size_t j = 0; j < s.t.size(); ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const std::size_t r = j * nx + i;
      d.x(r, 0) = s.x[i];
      d.x(r, 1) = s.t[j];
      d.y[r] = s.f[j][i];
    }
  }
  d.bounds = {{s.x.front(), s.x.back()}, {s.t.front(), s.t.back()}};
  return d;
}

struct SplitSpec {
  enum class Kind { ode_extrapolation, diffusion_slice, custom };
  Kind kind = Kind::custom;
  std::vector<std::size_t> train;  // custom
  std::vector<std::size_t> test;   // custom; empty means the complement of train

  static SplitSpec parse(const std::string& name) {
    if (name == "ode-extrapolation") return {Kind::ode_extrapolation, {}, {}};
    if (name == "diffusion-slice") return {Kind::diffusion_slice, {}, {}};
    throw InvalidSplit("unknown split '" + name + "' (expected ode-extrapolation, diffusion-slice or custom indices)");
  }

  [[nodiscard]] std::string name() const {
    switch (kind) {
      case Kind::ode_extrapolation: return "ode-extrapolation";
      case Kind::diffusion_slice: return "diffusion-slice";
      case Kind::custom: return "custom";
    }
    return "?";
  }
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
};

/// ode-extrapolation: first 101 of 1001 points train, the rest test.
/// diffusion-slice: the t = 0.5 column trains, the full grid tests.
inline DatasetSplit export_dataset(const Dataset& all, const SplitSpec& split) {
  DatasetSplit out;
  const std::size_t n = all.size();
  switch (split.kind) {
    case SplitSpec::Kind::ode_extrapolation: {
      if (all.dim() != 1 || n != 1001) throw InvalidSplit("ode-extrapolation needs the 1001-point ODE grid");
      for (std::size_t i = 0; i < n; ++i) (i < 101 ? out.train_rows : out.test_rows).push_back(i);
      break;
    }
    case SplitSpec::Kind::diffusion_slice: {
      if (all.dim() != 2 || n != 48 * 101) throw InvalidSplit("diffusion-slice needs the 48x101 diffusion grid");
      for (std::size_t r = 0; r < n; ++r) {
        if (r / 48 == 50) out.train_rows.push_back(r);
        out.test_rows.push_back(r);
      }
      break;
    }
    case SplitSpec::Kind::custom: {
      if (split.train.empty()) throw InvalidSplit("custom split needs training indices");
      std::vector<bool> used(n, false);
      for (std::size_t r : split.train) {
        if (r >= n) throw InvalidSplit("custom split index " + std::to_string(r) + " out of range");
        if (used[r]) throw InvalidSplit("custom split repeats index " + std::to_string(r));
        used[r] = true;
        out.train_rows.push_back(r);
      }
      if (split.test.empty()) {
        for (std::size_t r = 0; r < n; ++r) {
          if (!used[r]) out.test_rows.push_back(r);
        }
      } else {
        for (std::size_t r : split.test) {
          if (r >= n) throw InvalidSplit("custom split index " + std::to_string(r) + " out of range");
          out.test_rows.push_back(r);
        }
      }
      break;
    }
  }
  out.train = select_rows(all, out.train_rows);
  out.test = select_rows(all, out.test_rows);
  return out;
}

inline nlohmann::json metadata(const OdeProblem& p, const DatasetSplit& s, const SplitSpec& spec) {
  return {{"problem", "ode"},
          {"equation", "df/dt + B*f - D = g(t)"},
          {"B", p.B},
          {"D", p.D},
          {"g", p.g_label},
          {"f0", p.f0},
          {"domain", {{p.t_range.lo, p.t_range.hi}}},
          {"solver", {{"method", "rk4"}, {"n_points", p.n_points}, {"refinement", p.refinement}}},
          {"split", {{"name", spec.name()}, {"train_rows", s.train_rows.size()}, {"test_rows", s.test_rows.size()}}}};
}

inline nlohmann::json metadata(const DiffusionProblem& p, const DiffusionSolution& sol, const DatasetSplit& s,
                               const SplitSpec& spec) {
  return {{"problem", "diffusion"},
          {"equation", "df/dt - alpha*d2f/dx2 = g(x,t)"},
          {"alpha", p.alpha},
          {"g", "0"},
          {"init", p.init_label},
          {"boundary", "homogeneous Neumann"},
          {"columns", {"x", "t"}},
          {"domain", {{p.x_range.lo, p.x_range.hi}, {p.t_range.lo, p.t_range.hi}}},
          {"solver",
           {{"method", "crank-nicolson"},
            {"nx", p.nx},
            {"nt", p.nt},
            {"refine_x", p.refine_x},
            {"refine_t", sol.refine_t},
            {"lambda", sol.lambda}}},
          {"split", {{"name", spec.name()}, {"train_rows", s.train_rows.size()}, {"test_rows", s.test_rows.size()}}}};
}

}  // namespace pidkl
