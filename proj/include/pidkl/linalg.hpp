#pragma once

// Dense row-major linear algebra for exact GP inference. Everything is
// templated on the scalar so the same code runs on plain doubles and on taped
// ad::Var values.

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pidkl/autodiff/tape.hpp"
#include "pidkl/errors.hpp"

namespace pidkl {

template <class T>
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  [[nodiscard]] std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  [[nodiscard]] const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  bool operator==(const Matrix&) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Square matrix whose (i, j) and (j, i) entries are written together.
template <class T>
class SymMatrix {
public:
  SymMatrix() = default;
  explicit SymMatrix(std::size_t dim) : dim_(dim), data_(dim * dim) {
    if (dim == 0) throw DimensionMismatch("SymMatrix: dimension must be at least 1");
  }

  [[nodiscard]] std::size_t dim() const { return dim_; }

  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }

  void set(std::size_t i, std::size_t j, const T& v) {
    data_[i * dim_ + j] = v;
    data_[j * dim_ + i] = v;
  }

  void add_diagonal(const T& v) {
    for (std::size_t i = 0; i < dim_; ++i) data_[i * dim_ + i] = data_[i * dim_ + i] + v;
  }

  [[nodiscard]] std::span<const T> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

private:
  std::size_t dim_ = 0;
  std::vector<T> data_;
};

/// Lower Cholesky factor L with L Lᵀ = A + jitter_used·I. Stored as a full
/// row-major square so that row prefixes are contiguous.
template <class T>
struct CholFactor {
  std::size_t dim = 0;
  std::vector<T> lower;
  double jitter_used = 0.0;

  const T& operator()(std::size_t i, std::size_t j) const { return lower[i * dim + j]; }
  [[nodiscard]] std::span<const T> row_prefix(std::size_t i, std::size_t len) const {
    return {lower.data() + i * dim, len};
  }
};

namespace detail {

/// Plain double factorization; returns false on a non-positive pivot.
inline bool try_cholesky(const std::vector<double>& a, std::size_t n, double jitter,
                         std::vector<double>& l) {
  l.assign(n * n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const std::span<const double> lj(l.data() + j * n, j);
    const double pivot = a[j * n + j] + jitter - dot(lj, lj);
    if (!(pivot > 0.0) || !std::isfinite(pivot)) return false;
    const double ljj = std::sqrt(pivot);
    l[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      const std::span<const double> li(l.data() + i * n, j);
      l[i * n + j] = (a[i * n + j] - dot(li, lj)) / ljj;
    }
  }
  return true;
}

}  // namespace detail

/// Factors A + jitter·I. The jitter starts at `base_jitter`; on failure it
/// restarts from max(10·base_jitter, 1e-8·mean(diag A)) and grows ×10 up to
/// 1e-2·mean(diag A).
template <class T>
CholFactor<T> cholesky_jittered(const SymMatrix<T>& a, double base_jitter) {
  if (!(base_jitter >= 0.0)) throw ValidationError("cholesky_jittered: negative base jitter");
  const std::size_t n = a.dim();
  std::vector<double> values(n * n);
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) values[i * n + j] = value_of(a(i, j));
    mean_diag += values[i * n + i];
  }
  mean_diag /= static_cast<double>(n);

  std::vector<double> l;
  double jitter = base_jitter;
  bool ok = detail::try_cholesky(values, n, jitter, l);
  if (!ok && std::isfinite(mean_diag) && mean_diag > 0.0) {
    const double cap = 1e-2 * mean_diag * (1.0 + 1e-12);
    for (jitter = std::max(10.0 * base_jitter, 1e-8 * mean_diag); jitter <= cap; jitter *= 10.0) {
      if ((ok = detail::try_cholesky(values, n, jitter, l))) break;
    }
  }
  if (!ok) {
    throw FactorizationFailure("cholesky_jittered: matrix of dimension " + std::to_string(n) +
                               " is not positive definite even with maximal jitter");
  }

  CholFactor<T> out;
  out.dim = n;
  out.jitter_used = jitter;
  if constexpr (std::is_same_v<T, double>) {
    out.lower = std::move(l);
  } else {
    using std::sqrt;
    using ad::sqrt;
    out.lower.assign(n * n, T(0.0));
    for (std::size_t j = 0; j < n; ++j) {
      const std::span<const T> lj(out.lower.data() + j * n, j);
      const T ljj = sqrt(a(j, j) + T(jitter) - dot(lj, lj));
      out.lower[j * n + j] = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        const std::span<const T> li(out.lower.data() + i * n, j);
        out.lower[i * n + j] = (a(i, j) - dot(li, lj)) / ljj;
      }
    }
  }
  return out;
}

/// Solves L x = b.
template <class T>
std::vector<T> solve_lower(const CholFactor<T>& chol, std::span<const T> b) {
  require_dims(b.size(), chol.dim, "solve_lower");
  std::vector<T> x(chol.dim);
  for (std::size_t i = 0; i < chol.dim; ++i) {
    x[i] = (b[i] - dot(chol.row_prefix(i, i), std::span<const T>(x.data(), i))) / chol(i, i);
  }
  return x;
}

/// Solves Lᵀ x = b.
template <class T>
std::vector<T> solve_lower_transpose(const CholFactor<T>& chol, std::span<const T> b) {
  require_dims(b.size(), chol.dim, "solve_lower_transpose");
  const std::size_t n = chol.dim;
  std::vector<T> x(n);
  std::vector<T> col;
  std::vector<T> tail;
  for (std::size_t ii = n; ii-- > 0;) {
    col.clear();
    tail.clear();
    for (std::size_t k = ii + 1; k < n; ++k) {
      col.push_back(chol(k, ii));
      tail.push_back(x[k]);
    }
    x[ii] = (b[ii] - dot(std::span<const T>(col), std::span<const T>(tail))) / chol(ii, ii);
  }
  return x;
}

/// log|A + jitter·I| from the factor.
template <class T>
T log_det(const CholFactor<T>& chol) {
  using std::log;
  using ad::log;
  std::vector<T> logs(chol.dim);
  for (std::size_t i = 0; i < chol.dim; ++i) logs[i] = log(chol(i, i));
  return T(2.0) * sum(std::span<const T>(logs));
}

/// log N(x | 0, C) with C given by its Cholesky factor.
template <class T>
T gaussian_logpdf_zero_mean(std::span<const T> x, const CholFactor<T>& chol) {
  require_dims(x.size(), chol.dim, "gaussian_logpdf_zero_mean");
  const std::vector<T> beta = solve_lower(chol, x);
  const std::span<const T> b(beta);
  const double n = static_cast<double>(chol.dim);
  return T(-0.5) * dot(b, b) - T(0.5) * log_det(chol) - T(0.5 * n * std::log(2.0 * std::numbers::pi));
}

}  // namespace pidkl
