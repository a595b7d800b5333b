#pragma once

#include <cmath>
#include <functional>

#include "tgan/tensor.hpp"

namespace tgan::testing {

// Max-norm relative disagreement between reverse-mode and central
// finite-difference gradients of a scalar-valued function at x.
inline double grad_rel_err(const std::function<Tensor(const Tensor&)>& f,
                           Tensor x, double h = 1e-5) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor y = f(x);
  backward(y);
  Tensor fd = finite_diff_grad(
      [&](const Tensor& probe) {
        Tensor p = probe.detach();
        return f(p).item();
      },
      x, h);
  double max_diff = 0.0, max_ref = 0.0;
  for (size_t i = 0; i < fd.data().size(); ++i) {
    max_diff = std::max(max_diff, std::abs(x.grad()[i] - fd.data()[i]));
    max_ref = std::max(max_ref, std::abs(fd.data()[i]));
  }
  return max_diff / std::max(max_ref, 1e-6);
}

// Uniform values bounded away from zero, for kinked activations.
inline Tensor random_nonzero(const Shape& shape, Rng& rng) {
  Tensor t = uniform(shape, 0.1, 1.0, rng);
  std::uniform_int_distribution<int> coin(0, 1);
  for (double& v : t.mutable_data())
    if (coin(rng)) v = -v;
  return t;
}

}  // namespace tgan::testing
