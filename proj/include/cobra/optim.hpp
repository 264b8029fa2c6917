// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "cobra/tensor.hpp"

namespace cobra {

/// Piecewise schedule: linear warm-up to the peak, then cosine decay to zero.
/// Positions are fractional steps so warm-up can span a non-integer number of
/// epochs.
struct CosineSchedule {
  double peak_lr = 1e-3;
  double warmup_steps = 0.0;
  double total_steps = 1.0;

  double at(double step) const;
};

/// Decoupled weight decay Adam over a fixed parameter list.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    double weight_decay = 0.01;
  };

  explicit AdamW(std::vector<Tensor> params);
  AdamW(std::vector<Tensor> params, Options opts);

  /// One update from the accumulated grads, then zeroes them.
  void step(double lr);
  void zero_grad();
  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  Options opts_;
  std::int64_t t_ = 0;
};

/// Global-norm gradient clipping; returns the pre-clip norm.
double clip_grad_norm(const std::vector<Tensor>& params, double max_norm);

}  // namespace cobra
