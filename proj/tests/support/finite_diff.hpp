#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "doctest.h"
#include "seqmask/tensor.hpp"

namespace fdtest {

// Central finite differences with step 1e-5. The relative error against the
// recorded gradient must stay below 1e-4, using max(|analytic|, |numeric|,
// 1e-3) as the denominator so that near-zero gradients are compared on an
// absolute scale.
constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;

// build() must construct the scalar loss from the given leaves from scratch
// each call, so that value perturbations propagate.
inline void check_gradients(const std::function<seqmask::Tensor()>& build,
                            std::vector<seqmask::Tensor> leaves,
                            double step = kStep, double tol = kTol) {
  seqmask::Tensor root = build();
  root.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& leaf : leaves) {
    auto g = leaf.grad();
    if (g.empty())
      analytic.emplace_back(leaf.values().size(), 0.0);
    else
      analytic.emplace_back(g.begin(), g.end());
  }
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].mutable_values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      double fp = 0.0, fm = 0.0;
      {
        seqmask::NoGradGuard guard;
        vals[i] = orig + step;
        fp = build().value();
        vals[i] = orig - step;
        fm = build().value();
        vals[i] = orig;
      }
      const double fd = (fp - fm) / (2.0 * step);
      const double ad = analytic[li][i];
      const double denom = std::max({std::abs(ad), std::abs(fd), 1e-3});
      const double rel = std::abs(ad - fd) / denom;
      CAPTURE(li);
      CAPTURE(i);
      CAPTURE(ad);
      CAPTURE(fd);
      CHECK(rel < tol);
    }
  }
}

}  // namespace fdtest
