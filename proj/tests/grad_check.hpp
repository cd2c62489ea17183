#pragma once

#include <functional>

#include "oracles.hpp"
#include "safepaint/nn/ops.hpp"

namespace oracle {

/// Relative error between the autograd gradient of sum(R * f(x)) and its
/// central finite-difference estimate, R a fixed random weighting.
inline double grad_check(const std::function<Var(const Var&)>& f, const Tensor& x, std::uint64_t seed = 1,
                         double h = 1e-5) {
  using namespace safepaint::nn;
  Var probe_out;
  {
    NoGradGuard guard;
    probe_out = f(constant(x));
  }
  safepaint::Rng rng(seed);
  const Var weights = constant(random_tensor(probe_out->shape(), rng));
  auto scalar = [&](const Var& in) { return sum_all(mul(f(in), weights)); };

  Var p = parameter(x);
  backward(scalar(p));
  std::vector<double> analytic = p->grad.empty() ? std::vector<double>(x.numel(), 0.0) : p->grad.data;
  const auto numeric = numeric_grad(
      [&](const Tensor& t) {
        NoGradGuard guard;
        return scalar(constant(t))->value.item();
      },
      x, h);
  return relative_error(analytic, numeric);
}

}  // namespace oracle
