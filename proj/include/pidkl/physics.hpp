#pragma once

// Generative physics component: operator description, virtual input sampling,
// evaluation of the latent source implied by a posterior function draw, and
// its log density under the source GP with virtual observations fixed to zero.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pidkl/autodiff/jet.hpp"
#include "pidkl/data.hpp"
#include "pidkl/gp.hpp"
#include "pidkl/kernels.hpp"
#include "pidkl/linalg.hpp"
#include "pidkl/params.hpp"

namespace pidkl {

/// Either a named unknown coefficient (optionally negated) or a fixed constant.
struct CoeffRef {
  std::optional<std::string> name;
  bool negate = false;
  double constant = 0.0;

  static CoeffRef named(std::string n, bool negated = false) { return {std::move(n), negated, 0.0}; }
  static CoeffRef fixed(double v) { return {std::nullopt, false, v}; }

  bool operator==(const CoeffRef&) const = default;
};

/// ∂^order f / ∂x_var^order; order 0 is f itself.
struct PartialDerivative {
  std::size_t var = 0;
  int order = 0;
  bool operator==(const PartialDerivative&) const = default;
};

struct Term {
  CoeffRef coeff;
  std::vector<PartialDerivative> factors;
  bool operator==(const Term&) const = default;
};

/// ψ[f] = Σ_terms coeff·Π_factors D f + constant, in raw coordinates.
struct OperatorSpec {
  std::vector<Term> terms;
  std::optional<CoeffRef> constant;

  bool operator==(const OperatorSpec&) const = default;

  /// Named coefficients in order of first appearance.
  [[nodiscard]] std::vector<std::string> coefficient_names() const {
    std::vector<std::string> names;
    auto add = [&](const CoeffRef& c) {
      if (c.name && std::find(names.begin(), names.end(), *c.name) == names.end()) names.push_back(*c.name);
    };
    for (const auto& t : terms) add(t.coeff);
    if (constant) add(*constant);
    return names;
  }

  void validate(std::size_t dim) const {
    for (const auto& t : terms) {
      for (const auto& f : t.factors) {
        if (f.var >= dim) {
          throw ValidationError("operator: variable index " + std::to_string(f.var) + " out of range for d=" +
                                std::to_string(dim));
        }
        if (f.order < 0 || f.order > 2) throw ValidationError("operator: derivative order must be 0, 1 or 2");
      }
    }
  }

  template <class T>
  void validate(std::size_t dim, const ModelParams<T>& p) const {
    validate(dim);
    for (const auto& n : coefficient_names()) {
      if (p.find_coeff(n) == nullptr) throw ValidationError("operator: unknown coefficient '" + n + "'");
    }
  }
};

inline nlohmann::json to_json(const CoeffRef& c) {
  nlohmann::json j = nlohmann::json::object();
  if (c.name) {
    j["name"] = *c.name;
    if (c.negate) j["negate"] = true;
  } else {
    j["const"] = c.constant;
  }
  return j;
}

inline CoeffRef coeff_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("operator: coefficient must be an object");
  for (const auto& [key, _] : j.items()) {
    if (key != "name" && key != "negate" && key != "const") throw ParseError("operator: unknown key '" + key + "'");
  }
  CoeffRef c;
  if (j.contains("name") == j.contains("const")) {
    throw ParseError("operator: coefficient needs exactly one of 'name' or 'const'");
  }
  if (j.contains("name")) {
    if (!j["name"].is_string()) throw ParseError("operator: 'name' must be a string");
    c.name = j["name"].get<std::string>();
    if (j.contains("negate")) {
      if (!j["negate"].is_boolean()) throw ParseError("operator: 'negate' must be a boolean");
      c.negate = j["negate"].get<bool>();
    }
  } else {
    if (j.contains("negate")) throw ParseError("operator: 'negate' only applies to named coefficients");
    if (!j["const"].is_number()) throw ParseError("operator: 'const' must be a number");
    c.constant = j["const"].get<double>();
  }
  return c;
}

inline nlohmann::json to_json(const OperatorSpec& op) {
  nlohmann::json terms = nlohmann::json::array();
  for (const auto& t : op.terms) {
    nlohmann::json factors = nlohmann::json::array();
    for (const auto& f : t.factors) factors.push_back({{"var", f.var}, {"order", f.order}});
    terms.push_back({{"coeff", to_json(t.coeff)}, {"factors", factors}});
  }
  nlohmann::json j = {{"terms", terms}};
  if (op.constant) j["constant"] = to_json(*op.constant);
  return j;
}

inline OperatorSpec operator_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("terms") || !j["terms"].is_array()) {
    throw ParseError("operator: expected an object with a 'terms' array");
  }
  for (const auto& [key, _] : j.items()) {
    if (key != "terms" && key != "constant") throw ParseError("operator: unknown key '" + key + "'");
  }
  OperatorSpec op;
  for (const auto& jt : j["terms"]) {
    if (!jt.is_object() || !jt.contains("coeff") || !jt.contains("factors") || !jt["factors"].is_array()) {
      throw ParseError("operator: each term needs 'coeff' and 'factors'");
    }
    for (const auto& [key, _] : jt.items()) {
      if (key != "coeff" && key != "factors") throw ParseError("operator: unknown term key '" + key + "'");
    }
    Term t;
    t.coeff = coeff_from_json(jt["coeff"]);
    for (const auto& jf : jt["factors"]) {
      if (!jf.is_object() || !jf.contains("var") || !jf.contains("order") || !jf["var"].is_number_unsigned() ||
          !jf["order"].is_number_integer() || jf.size() != 2) {
        throw ParseError("operator: factor must be {\"var\": <uint>, \"order\": <int>}");
      }
      t.factors.push_back({jf["var"].get<std::size_t>(), jf["order"].get<int>()});
    }
    op.terms.push_back(std::move(t));
  }
  if (j.contains("constant")) op.constant = coeff_from_json(j["constant"]);
  for (const auto& t : op.terms) {
    for (const auto& f : t.factors) {
      if (f.order < 0 || f.order > 2) throw ParseError("operator: derivative order must be 0, 1 or 2");
    }
  }
  return op;
}

inline std::string serialize(const OperatorSpec& op) { return to_json(op).dump(); }

inline OperatorSpec parse_operator(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("operator: ") + e.what());
  }
  return operator_from_json(j);
}

/// p(Z): uniform over the raw-coordinate domain box, or standard normal in
/// standardized coordinates.
struct VirtualInputSampler {
  enum class Kind { uniform_box, standard_normal };
  Kind kind = Kind::uniform_box;
  std::vector<Interval> bounds;  // uniform_box
  std::size_t dim = 0;           // standard_normal
  std::size_t m = 10;

  [[nodiscard]] std::size_t input_dim() const { return kind == Kind::uniform_box ? bounds.size() : dim; }

  void validate() const {
    if (m < 1) throw ValidationError("sampler: m must be at least 1");
    if (kind == Kind::uniform_box) {
      if (bounds.empty()) throw ValidationError("sampler: uniform box needs bounds");
      for (const auto& b : bounds) {
        if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || !(b.lo < b.hi)) {
          throw ValidationError("sampler: bounds must be finite with lo < hi");
        }
      }
    } else if (dim == 0) {
      throw ValidationError("sampler: standard normal needs a dimension");
    }
  }
};

/// m i.i.d. rows from p(Z), drawn row-major. Uniform samples are in raw
/// coordinates, normal samples in standardized coordinates.
template <class Rng>
Matrix<double> sample_virtual_inputs(const VirtualInputSampler& s, Rng& rng) {
  s.validate();
  const std::size_t d = s.input_dim();
  Matrix<double> z(s.m, d);
  if (s.kind == VirtualInputSampler::Kind::uniform_box) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < s.m; ++i) {
      for (std::size_t k = 0; k < d; ++k) z(i, k) = s.bounds[k].lo + (s.bounds[k].hi - s.bounds[k].lo) * u(rng);
    }
  } else {
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t i = 0; i < s.m; ++i) {
      for (std::size_t k = 0; k < d; ++k) z(i, k) = n(rng);
    }
  }
  return z;
}

/// Converts sampler output to raw coordinates.
inline Matrix<double> virtual_inputs_to_raw(const VirtualInputSampler& s, const Matrix<double>& z,
                                            const Standardizer& standardizer) {
  if (s.kind == VirtualInputSampler::Kind::uniform_box) return z;
  Matrix<double> raw(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto r = standardizer.to_raw(z.row(i));
    std::copy(r.begin(), r.end(), raw.row(i).begin());
  }
  return raw;
}

template <class T>
T coefficient_value(const CoeffRef& c, const ModelParams<T>& p) {
  if (!c.name) return T(c.constant);
  const EqCoeff<T>* found = p.find_coeff(*c.name);
  if (found == nullptr) throw ValidationError("operator: unknown coefficient '" + *c.name + "'");
  const T v = found->value();
  return c.negate ? T(-v) : v;
}

/// ψ applied to a function jet taken in standardized coordinates. Derivatives
/// are mapped to raw coordinates by (1/scale_j)^order, and order-0 factors
/// include the output mean.
template <class T>
T apply_operator(const OperatorSpec& op, const Jet2<T>& f, const ModelFrame& frame, const ModelParams<T>& p) {
  std::vector<T> parts;
  parts.reserve(op.terms.size() + 1);
  for (const auto& term : op.terms) {
    T prod = coefficient_value(term.coeff, p);
    for (const auto& fac : term.factors) {
      if (fac.var >= static_cast<std::size_t>(f.dim())) throw ValidationError("operator: variable index out of range");
      const int j = static_cast<int>(fac.var);
      const double inv = 1.0 / frame.standardizer.scale[fac.var];
      switch (fac.order) {
        case 0: prod = prod * (f.value() + T(frame.y_mean)); break;
        case 1: prod = prod * (f.grad(j) * T(inv)); break;
        case 2: prod = prod * (f.hess(j, j) * T(inv * inv)); break;
        default: throw ValidationError("operator: derivative order must be 0, 1 or 2");
      }
    }
    parts.push_back(prod);
  }
  if (op.constant) parts.push_back(coefficient_value(*op.constant, p));
  return sum(std::span<const T>(parts));
}

/// h(z_j, ε) for every row of Z (raw coordinates); one ε is shared by all rows.
template <class T>
std::vector<T> eval_h(const Matrix<double>& z_raw, const T& eps, const OperatorSpec& op, const GpPosterior<T>& post,
                      const ModelParams<T>& p, const ModelFrame& frame) {
  require_dims(z_raw.cols(), frame.standardizer.dim(), "eval_h");
  std::vector<T> h(z_raw.rows());
  for (std::size_t j = 0; j < z_raw.rows(); ++j) {
    const auto zs = frame.standardizer.to_standard(z_raw.row(j));
    const Jet2<T> f = posterior_surrogate(std::span<const double>(zs), eps, post, p);
    h[j] = apply_operator(op, f, frame, p);
    if (!std::isfinite(value_of(h[j]))) throw NonFiniteIntermediate("eval_h: non-finite source value");
  }
  return h;
}

/// Relative diagonal jitter of the source covariance.
inline constexpr double kSourceJitter = 1e-6;

/// Σ over raw virtual inputs from the source kernel, plus kSourceJitter·σ².
template <class T>
SymMatrix<T> source_covariance(const Matrix<double>& z_raw, const ArdParams<T>& source) {
  using std::exp;
  using ad::exp;
  SymMatrix<T> sigma(z_raw.rows());
  std::vector<std::vector<T>> rows;
  for (std::size_t i = 0; i < z_raw.rows(); ++i) rows.push_back(to_scalar_vector<T>(z_raw.row(i)));
  for (std::size_t i = 0; i < z_raw.rows(); ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      sigma.set(i, j, ard_eval(std::span<const T>(rows[i]), std::span<const T>(rows[j]), source));
    }
  }
  sigma.add_diagonal(T(kSourceJitter) * exp(source.log_signal_variance));
  return sigma;
}

/// log N(h(Z, ε) | 0, Σ).
template <class T>
T generative_log_term(const Matrix<double>& z_raw, const T& eps, const OperatorSpec& op, const GpPosterior<T>& post,
                      const ModelParams<T>& p, const ModelFrame& frame) {
  const std::vector<T> h = eval_h(z_raw, eps, op, post, p, frame);
  const CholFactor<T> chol = cholesky_jittered(source_covariance(z_raw, p.source), 0.0);
  return gaussian_logpdf_zero_mean(std::span<const T>(h), chol);
}

}  // namespace pidkl
