// SPDX-License-Identifier: Apache-2.0
#include "cobra/optim.hpp"

#include <cmath>

namespace cobra {

double CosineSchedule::at(double step) const {
  if (warmup_steps > 0.0 && step < warmup_steps) {
    return peak_lr * step / warmup_steps;
  }
  const double span = total_steps - warmup_steps;
  if (span <= 0.0) return peak_lr;
  const double frac = std::min(1.0, (step - warmup_steps) / span);
  return peak_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

AdamW::AdamW(std::vector<Tensor> params) : AdamW(std::move(params), Options()) {}

AdamW::AdamW(std::vector<Tensor> params, Options opts)
    : params_(std::move(params)), opts_(opts) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Tensor& p : params_) {
    p.ensure_grad();
    m_.emplace_back(p.data->size(), 0.0);
    v_.emplace_back(p.data->size(), 0.0);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = params_[pi];
    double* w = p.data->data();
    double* g = p.grad->data();
    double* m = m_[pi].data();
    double* v = v_[pi].data();
    const std::size_t n = p.data->size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + opts_.eps) + opts_.weight_decay * w[i]);
      g[i] = 0.0;
    }
  }
}

void AdamW::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double clip_grad_norm(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params) {
    if (!p.grad) continue;
    for (double g : *p.grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (const Tensor& p : params) {
      if (!p.grad) continue;
      for (double& g : *p.grad) g *= f;
    }
  }
  return norm;
}

}  // namespace cobra
