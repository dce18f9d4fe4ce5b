#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "scl/tensor.hpp"

namespace scl::testing {

// Central finite-difference check of reverse-mode gradients.
//
// `f` rebuilds the scalar loss from leaf tensors each call (define-by-run);
// the analytic gradient at `inputs` must match (f(x+h)-f(x-h))/2h per
// coordinate with relative error < tol, denominator floored at 1e-8.
inline void check_gradients(const std::string& what,
                            const std::function<Tensor(std::vector<Tensor>&)>& f,
                            const std::vector<Shape>& shapes,
                            std::vector<std::vector<double>> base, double h = 1e-5,
                            double tol = 1e-4) {
  std::vector<Tensor> leaves;
  for (size_t i = 0; i < shapes.size(); ++i)
    leaves.push_back(Tensor(shapes[i], std::vector<double>(base[i])).set_requires_grad(true));
  Tensor loss = f(leaves);
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto& t : leaves) analytic.push_back(t.grad());

  auto eval = [&](const std::vector<std::vector<double>>& vals) {
    std::vector<Tensor> plain;
    for (size_t i = 0; i < shapes.size(); ++i)
      plain.push_back(Tensor(shapes[i], std::vector<double>(vals[i])));
    return f(plain).item();
  };

  for (size_t i = 0; i < shapes.size(); ++i) {
    for (size_t j = 0; j < base[i].size(); ++j) {
      auto up = base, dn = base;
      up[i][j] += h;
      dn[i][j] -= h;
      double fd = (eval(up) - eval(dn)) / (2 * h);
      double g = analytic[i][j];
      double rel = std::abs(fd - g) / std::max(1e-8, std::max(std::abs(fd), std::abs(g)));
      ASSERT_LT(rel, tol) << what << ": input " << i << " coord " << j << " analytic " << g
                          << " vs finite-difference " << fd;
    }
  }
}

}  // namespace scl::testing
