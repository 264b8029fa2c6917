// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cobra/tensor.hpp"

namespace cobra::test {

// Relative error with a floor so near-zero gradients are judged on an
// absolute 1e-8-class scale instead of blowing up the ratio.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4});
}

// Central-difference check of d(loss)/d(param[i]) against param.grad[i].
// `loss_fn` must recompute the forward pass (no tape) from current values.
// Returns the worst relative error across the checked entries.
inline double central_diff_check(const std::function<double()>& loss_fn, Tensor& param,
                                 const std::vector<std::size_t>& entries, double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i : entries) {
    const double saved = (*param.data)[i];
    (*param.data)[i] = saved + h;
    const double up = loss_fn();
    (*param.data)[i] = saved - h;
    const double down = loss_fn();
    (*param.data)[i] = saved;
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, rel_err(fd, (*param.grad)[i]));
  }
  return worst;
}

inline std::vector<std::size_t> all_entries(const Tensor& t) {
  std::vector<std::size_t> out(t.data->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

}  // namespace cobra::test
