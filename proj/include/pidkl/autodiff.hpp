#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "pidkl/autodiff/jet.hpp"
#include "pidkl/autodiff/tape.hpp"
#include "pidkl/params.hpp"

namespace pidkl {

/// Loss value and its gradient with respect to every entry of `theta`, in the
/// canonical flattening order. `loss` maps ModelParams<Var> to a Var.
template <class Loss>
std::pair<double, std::vector<double>> param_gradient(Loss&& loss, const ModelParams<double>& theta,
                                                      ad::Tape& tape) {
  tape.clear();
  ad::TapeScope scope(tape);
  const ModelParams<Var> lifted = lift(theta, tape);
  const std::size_t n = param_count(theta);
  const Var out = loss(lifted);
  if (!std::isfinite(out.v)) throw NonFiniteGradient("param_gradient: non-finite loss");
  std::vector<double> grad = tape.gradient(out, n);
  for (double g : grad) {
    if (!std::isfinite(g)) throw NonFiniteGradient("param_gradient: non-finite gradient entry");
  }
  return {out.v, std::move(grad)};
}

template <class Loss>
std::pair<double, std::vector<double>> param_gradient(Loss&& loss, const ModelParams<double>& theta) {
  ad::Tape tape;
  return param_gradient(std::forward<Loss>(loss), theta, tape);
}

}  // namespace pidkl
