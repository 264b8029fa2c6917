// SPDX-License-Identifier: Apache-2.0
#include "cobra/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cobra {

namespace {

thread_local Tape* g_tape = nullptr;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (g_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad) return true;
  }
  return false;
}

// Flips the output into gradient-carrying mode. Must run before the pull
// lambda is constructed so the capture sees the allocated grad buffer.
void mark_output(Tensor& out) {
  out.requires_grad = true;
  out.ensure_grad();
}

void record(Tensor& out, std::function<void()> pull) {
  g_tape->nodes_.push_back({out.grad, std::move(pull)});
}

void check_2d(const Tensor& t, const char* op) {
  if (t.shape.size() != 2) {
    throw ShapeError(std::string(op) + ": expected 2-D tensor, got shape " + shape_str(t.shape));
  }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape != b.shape) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

Tensor Tensor::zeros(Shape s, bool requires_grad) {
  Tensor t;
  t.shape = std::move(s);
  t.data = std::make_shared<std::vector<double>>(shape_numel(t.shape), 0.0);
  t.requires_grad = requires_grad;
  if (requires_grad) t.ensure_grad();
  return t;
}

Tensor Tensor::full(Shape s, double value) {
  Tensor t = zeros(std::move(s));
  std::fill(t.data->begin(), t.data->end(), value);
  return t;
}

Tensor Tensor::from(Shape s, std::vector<double> values) {
  if (shape_numel(s) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("Tensor::from: " + shape_str(s) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  Tensor t;
  t.shape = std::move(s);
  t.data = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::gaussian(Shape s, double stddev, Rng& rng, bool requires_grad) {
  Tensor t = zeros(std::move(s), requires_grad);
  for (double& v : *t.data) v = stddev * rng.gaussian();
  return t;
}

int Tensor::rows() const {
  check_2d(*this, "rows");
  return shape[0];
}

int Tensor::cols() const {
  check_2d(*this, "cols");
  return shape[1];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw UsageError("item: tensor of shape " + shape_str(shape) + " is not scalar");
  }
  return (*data)[0];
}

void Tensor::ensure_grad() {
  if (!grad) grad = std::make_shared<std::vector<double>>(data->size(), 0.0);
}

void Tensor::zero_grad() {
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
}

Tensor Tensor::clone_values() const {
  Tensor t;
  t.shape = shape;
  t.data = std::make_shared<std::vector<double>>(*data);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : *data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

TapeScope::TapeScope(Tape& tape) : prev_(g_tape) { g_tape = &tape; }
TapeScope::~TapeScope() { g_tape = prev_; }

Tape* active_tape() { return g_tape; }

void backward(const Tensor& loss, Tape& tape) {
  if (loss.numel() != 1) {
    throw UsageError("backward: loss must be scalar, got shape " + shape_str(loss.shape));
  }
  if (!loss.grad) {
    throw UsageError("backward: loss is not connected to the tape");
  }
  // Intermediate (tape output) grads restart from zero; leaf grads persist.
  for (Tape::Node& n : tape.nodes_) std::fill(n.out_grad->begin(), n.out_grad->end(), 0.0);
  (*loss.grad)[0] += 1.0;
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) it->pull();
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] + (*b.data)[i];
  if (recording({&a, &b})) {
    auto ag = a.requires_grad ? a.grad : nullptr;
    auto bg = b.requires_grad ? b.grad : nullptr;
    mark_output(out);
    record(out, [og = out.grad, ag, bg, n]() {
      if (ag)
        for (std::size_t i = 0; i < n; ++i) (*ag)[i] += (*og)[i];
      if (bg)
        for (std::size_t i = 0; i < n; ++i) (*bg)[i] += (*og)[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = (*a.data)[i] * (*b.data)[i];
  if (recording({&a, &b})) {
    auto ag = a.requires_grad ? a.grad : nullptr;
    auto bg = b.requires_grad ? b.grad : nullptr;
    mark_output(out);
    record(out, [og = out.grad, ad = a.data, bd = b.data, ag, bg, n]() {
      if (ag)
        for (std::size_t i = 0; i < n; ++i) (*ag)[i] += (*og)[i] * (*bd)[i];
      if (bg)
        for (std::size_t i = 0; i < n; ++i) (*bg)[i] += (*og)[i] * (*ad)[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape);
  const std::size_t n = a.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = c * (*a.data)[i];
  if (recording({&a})) {
    mark_output(out);
    record(out, [og = out.grad, ag = a.grad, c, n]() {
      for (std::size_t i = 0; i < n; ++i) (*ag)[i] += c * (*og)[i];
    });
  }
  return out;
}

Tensor add_rowwise(const Tensor& x, const Tensor& bias) {
  check_2d(x, "add_rowwise");
  if (bias.shape != Shape{x.cols()}) {
    throw ShapeError("add_rowwise: bias " + shape_str(bias.shape) + " does not match row width " +
                     std::to_string(x.cols()));
  }
  const int T = x.rows(), D = x.cols();
  Tensor out = Tensor::zeros(x.shape);
  for (int t = 0; t < T; ++t)
    for (int d = 0; d < D; ++d) out.at(t, d) = x.at(t, d) + (*bias.data)[d];
  if (recording({&x, &bias})) {
    auto xg = x.requires_grad ? x.grad : nullptr;
    auto bg = bias.requires_grad ? bias.grad : nullptr;
    mark_output(out);
    record(out, [og = out.grad, xg, bg, T, D]() {
      if (xg)
        for (std::size_t i = 0; i < static_cast<std::size_t>(T) * D; ++i) (*xg)[i] += (*og)[i];
      if (bg)
        for (int t = 0; t < T; ++t)
          for (int d = 0; d < D; ++d) (*bg)[d] += (*og)[static_cast<std::size_t>(t) * D + d];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape) + " x " +
                     shape_str(b.shape));
  }
  const int M = a.rows(), K = a.cols(), N = b.cols();
  Tensor out = Tensor::zeros({M, N});
  {
    const double* A = a.ptr();
    const double* B = b.ptr();
    double* C = out.ptr();
    for (int i = 0; i < M; ++i) {
      double* crow = C + static_cast<std::size_t>(i) * N;
      for (int k = 0; k < K; ++k) {
        const double aik = A[static_cast<std::size_t>(i) * K + k];
        const double* brow = B + static_cast<std::size_t>(k) * N;
        for (int j = 0; j < N; ++j) crow[j] += aik * brow[j];
      }
    }
  }
  if (recording({&a, &b})) {
    auto ag = a.requires_grad ? a.grad : nullptr;
    auto bg = b.requires_grad ? b.grad : nullptr;
    mark_output(out);
    record(out, [og = out.grad, ad = a.data, bd = b.data, ag, bg, M, K, N]() {
      const double* G = og->data();
      if (ag) {
        // dA[i,k] += sum_j G[i,j] B[k,j]
        const double* B = bd->data();
        double* dA = ag->data();
        for (int i = 0; i < M; ++i) {
          const double* grow = G + static_cast<std::size_t>(i) * N;
          for (int k = 0; k < K; ++k) {
            const double* brow = B + static_cast<std::size_t>(k) * N;
            double acc = 0.0;
            for (int j = 0; j < N; ++j) acc += grow[j] * brow[j];
            dA[static_cast<std::size_t>(i) * K + k] += acc;
          }
        }
      }
      if (bg) {
        // dB[k,j] += sum_i A[i,k] G[i,j]
        const double* A = ad->data();
        double* dB = bg->data();
        for (int i = 0; i < M; ++i) {
          const double* grow = G + static_cast<std::size_t>(i) * N;
          for (int k = 0; k < K; ++k) {
            const double aik = A[static_cast<std::size_t>(i) * K + k];
            double* dbrow = dB + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) dbrow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  check_2d(x, "transpose");
  const int R = x.rows(), C = x.cols();
  Tensor out = Tensor::zeros({C, R});
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < C; ++c) out.at(c, r) = x.at(r, c);
  if (recording({&x})) {
    mark_output(out);
    record(out, [og = out.grad, xg = x.grad, R, C]() {
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
          (*xg)[static_cast<std::size_t>(r) * C + c] += (*og)[static_cast<std::size_t>(c) * R + r];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Row-wise nonlinearities
// ---------------------------------------------------------------------------

Tensor softmax_rows(const Tensor& x) {
  check_2d(x, "softmax_rows");
  const int R = x.rows(), C = x.cols();
  Tensor out = Tensor::zeros(x.shape);
  for (int r = 0; r < R; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < C; ++c) mx = std::max(mx, x.at(r, c));
    double z = 0.0;
    for (int c = 0; c < C; ++c) {
      double e = std::exp(x.at(r, c) - mx);
      out.at(r, c) = e;
      z += e;
    }
    for (int c = 0; c < C; ++c) out.at(r, c) /= z;
  }
  if (recording({&x})) {
    mark_output(out);
    record(out, [og = out.grad, od = out.data, xg = x.grad, R, C]() {
      for (int r = 0; r < R; ++r) {
        const double* y = od->data() + static_cast<std::size_t>(r) * C;
        const double* g = og->data() + static_cast<std::size_t>(r) * C;
        double dot = 0.0;
        for (int c = 0; c < C; ++c) dot += y[c] * g[c];
        double* dx = xg->data() + static_cast<std::size_t>(r) * C;
        for (int c = 0; c < C; ++c) dx[c] += y[c] * (g[c] - dot);
      }
    });
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& x) {
  check_2d(x, "log_softmax_rows");
  const int R = x.rows(), C = x.cols();
  Tensor out = Tensor::zeros(x.shape);
  for (int r = 0; r < R; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < C; ++c) mx = std::max(mx, x.at(r, c));
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(x.at(r, c) - mx);
    const double logz = mx + std::log(z);
    for (int c = 0; c < C; ++c) out.at(r, c) = x.at(r, c) - logz;
  }
  if (recording({&x})) {
    mark_output(out);
    record(out, [og = out.grad, od = out.data, xg = x.grad, R, C]() {
      for (int r = 0; r < R; ++r) {
        const double* y = od->data() + static_cast<std::size_t>(r) * C;
        const double* g = og->data() + static_cast<std::size_t>(r) * C;
        double gsum = 0.0;
        for (int c = 0; c < C; ++c) gsum += g[c];
        double* dx = xg->data() + static_cast<std::size_t>(r) * C;
        for (int c = 0; c < C; ++c) dx[c] += g[c] - std::exp(y[c]) * gsum;
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  check_2d(x, "layer_norm");
  const int T = x.rows(), D = x.cols();
  if (gain.shape != Shape{D} || bias.shape != Shape{D}) {
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(D) + "]");
  }
  Tensor out = Tensor::zeros(x.shape);
  std::vector<double> inv_std(T), mean(T);
  for (int t = 0; t < T; ++t) {
    double mu = 0.0;
    for (int d = 0; d < D; ++d) mu += x.at(t, d);
    mu /= D;
    double var = 0.0;
    for (int d = 0; d < D; ++d) {
      const double c = x.at(t, d) - mu;
      var += c * c;
    }
    var /= D;
    const double is = 1.0 / std::sqrt(var + eps);
    mean[t] = mu;
    inv_std[t] = is;
    for (int d = 0; d < D; ++d)
      out.at(t, d) = (*gain.data)[d] * (x.at(t, d) - mu) * is + (*bias.data)[d];
  }
  if (recording({&x, &gain, &bias})) {
    auto xg = x.requires_grad ? x.grad : nullptr;
    auto gg = gain.requires_grad ? gain.grad : nullptr;
    auto bg = bias.requires_grad ? bias.grad : nullptr;
    mark_output(out);
    record(out, [og = out.grad, xd = x.data, gd = gain.data, xg, gg, bg, mean, inv_std, T, D]() {
      for (int t = 0; t < T; ++t) {
        const double* xrow = xd->data() + static_cast<std::size_t>(t) * D;
        const double* grow = og->data() + static_cast<std::size_t>(t) * D;
        const double mu = mean[t], is = inv_std[t];
        if (gg || bg) {
          for (int d = 0; d < D; ++d) {
            const double xhat = (xrow[d] - mu) * is;
            if (gg) (*gg)[d] += grow[d] * xhat;
            if (bg) (*bg)[d] += grow[d];
          }
        }
        if (xg) {
          // dxhat = g .* gain; dx = is*(dxhat - mean(dxhat) - xhat*mean(dxhat.*xhat))
          double m1 = 0.0, m2 = 0.0;
          for (int d = 0; d < D; ++d) {
            const double dxh = grow[d] * (*gd)[d];
            const double xhat = (xrow[d] - mu) * is;
            m1 += dxh;
            m2 += dxh * xhat;
          }
          m1 /= D;
          m2 /= D;
          double* dx = xg->data() + static_cast<std::size_t>(t) * D;
          for (int d = 0; d < D; ++d) {
            const double dxh = grow[d] * (*gd)[d];
            const double xhat = (xrow[d] - mu) * is;
            dx[d] += is * (dxh - m1 - xhat * m2);
          }
        }
      }
    });
  }
  return out;
}

Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel) {
  check_2d(x, "depthwise_conv1d");
  check_2d(kernel, "depthwise_conv1d");
  const int T = x.rows(), D = x.cols(), K = kernel.rows();
  if (kernel.cols() != D) {
    throw ShapeError("depthwise_conv1d: kernel " + shape_str(kernel.shape) +
                     " does not match channels " + std::to_string(D));
  }
  if (K % 2 == 0) {
    throw ConfigError("depthwise_conv1d: kernel length must be odd, got " + std::to_string(K));
  }
  const int half = K / 2;
  Tensor out = Tensor::zeros(x.shape);
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < K; ++i) {
      const int s = t + i - half;
      if (s < 0 || s >= T) continue;
      for (int d = 0; d < D; ++d) out.at(t, d) += kernel.at(i, d) * x.at(s, d);
    }
  }
  if (recording({&x, &kernel})) {
    auto xg = x.requires_grad ? x.grad : nullptr;
    auto kg = kernel.requires_grad ? kernel.grad : nullptr;
    mark_output(out);
    record(out, [og = out.grad, xd = x.data, kd = kernel.data, xg, kg, T, D, K, half]() {
      for (int t = 0; t < T; ++t) {
        const double* grow = og->data() + static_cast<std::size_t>(t) * D;
        for (int i = 0; i < K; ++i) {
          const int s = t + i - half;
          if (s < 0 || s >= T) continue;
          const double* xrow = xd->data() + static_cast<std::size_t>(s) * D;
          const double* krow = kd->data() + static_cast<std::size_t>(i) * D;
          if (xg) {
            double* dx = xg->data() + static_cast<std::size_t>(s) * D;
            for (int d = 0; d < D; ++d) dx[d] += krow[d] * grow[d];
          }
          if (kg) {
            double* dk = kg->data() + static_cast<std::size_t>(i) * D;
            for (int d = 0; d < D; ++d) dk[d] += xrow[d] * grow[d];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor swish(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape);
  const std::size_t n = x.data->size();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = (*x.data)[i];
    (*out.data)[i] = v / (1.0 + std::exp(-v));
  }
  if (recording({&x})) {
    mark_output(out);
    record(out, [og = out.grad, xd = x.data, xg = x.grad, n]() {
      for (std::size_t i = 0; i < n; ++i) {
        const double v = (*xd)[i];
        const double s = 1.0 / (1.0 + std::exp(-v));
        (*xg)[i] += (*og)[i] * s * (1.0 + v * (1.0 - s));
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape);
  const std::size_t n = x.data->size();
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = (*x.data)[i];
    (*out.data)[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  if (recording({&x})) {
    mark_output(out);
    record(out, [og = out.grad, xd = x.data, xg = x.grad, n]() {
      constexpr double inv_sqrt_2pi = 0.39894228040143267794;
      constexpr double inv_sqrt2 = 0.70710678118654752440;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = (*xd)[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        (*xg)[i] += (*og)[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape);
  const std::size_t n = x.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = 1.0 / (1.0 + std::exp(-(*x.data)[i]));
  if (recording({&x})) {
    mark_output(out);
    record(out, [og = out.grad, od = out.data, xg = x.grad, n]() {
      for (std::size_t i = 0; i < n; ++i) {
        const double s = (*od)[i];
        (*xg)[i] += (*og)[i] * s * (1.0 - s);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape plumbing
// ---------------------------------------------------------------------------

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  check_2d(a, "concat_rows");
  check_2d(b, "concat_rows");
  if (a.cols() != b.cols()) {
    throw ShapeError("concat_rows: widths differ, " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
  }
  Tensor out = Tensor::zeros({a.rows() + b.rows(), a.cols()});
  std::copy(a.data->begin(), a.data->end(), out.data->begin());
  std::copy(b.data->begin(), b.data->end(), out.data->begin() + a.data->size());
  if (recording({&a, &b})) {
    auto ag = a.requires_grad ? a.grad : nullptr;
    auto bg = b.requires_grad ? b.grad : nullptr;
    const std::size_t na = a.data->size(), nb = b.data->size();
    mark_output(out);
    record(out, [og = out.grad, ag, bg, na, nb]() {
      if (ag)
        for (std::size_t i = 0; i < na; ++i) (*ag)[i] += (*og)[i];
      if (bg)
        for (std::size_t i = 0; i < nb; ++i) (*bg)[i] += (*og)[na + i];
    });
  }
  return out;
}

std::pair<Tensor, Tensor> split_rows(const Tensor& x, int top_rows) {
  check_2d(x, "split_rows");
  const int R = x.rows(), D = x.cols();
  if (top_rows < 0 || top_rows > R) {
    throw ShapeError("split_rows: split point " + std::to_string(top_rows) + " outside [0," +
                     std::to_string(R) + "]");
  }
  Tensor top = Tensor::zeros({top_rows, D});
  Tensor bot = Tensor::zeros({R - top_rows, D});
  const std::size_t ntop = top.data->size();
  std::copy(x.data->begin(), x.data->begin() + ntop, top.data->begin());
  std::copy(x.data->begin() + ntop, x.data->end(), bot.data->begin());
  if (recording({&x})) {
    mark_output(top);
    record(top, [og = top.grad, xg = x.grad, ntop]() {
      for (std::size_t i = 0; i < ntop; ++i) (*xg)[i] += (*og)[i];
    });
    const std::size_t nbot = bot.data->size();
    mark_output(bot);
    record(bot, [og = bot.grad, xg = x.grad, ntop, nbot]() {
      for (std::size_t i = 0; i < nbot; ++i) (*xg)[ntop + i] += (*og)[i];
    });
  }
  return {top, bot};
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  check_2d(x, "slice_cols");
  const int R = x.rows(), C = x.cols();
  if (c0 < 0 || c1 > C || c0 >= c1) {
    throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") invalid for width " + std::to_string(C));
  }
  const int W = c1 - c0;
  Tensor out = Tensor::zeros({R, W});
  for (int r = 0; r < R; ++r)
    for (int c = 0; c < W; ++c) out.at(r, c) = x.at(r, c0 + c);
  if (recording({&x})) {
    mark_output(out);
    record(out, [og = out.grad, xg = x.grad, R, C, W, c0]() {
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < W; ++c)
          (*xg)[static_cast<std::size_t>(r) * C + c0 + c] +=
              (*og)[static_cast<std::size_t>(r) * W + c];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: empty input list");
  const int R = parts[0].rows();
  int W = 0;
  for (const Tensor& p : parts) {
    check_2d(p, "concat_cols");
    if (p.rows() != R) throw ShapeError("concat_cols: row counts differ");
    W += p.cols();
  }
  Tensor out = Tensor::zeros({R, W});
  int off = 0;
  bool rec = false;
  for (const Tensor& p : parts) rec = rec || p.requires_grad;
  rec = rec && active_tape() != nullptr;
  for (const Tensor& p : parts) {
    const int w = p.cols();
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < w; ++c) out.at(r, off + c) = p.at(r, c);
    off += w;
  }
  if (rec) {
    struct Part {
      std::shared_ptr<std::vector<double>> grad;
      int off, w;
    };
    std::vector<Part> gps;
    off = 0;
    for (const Tensor& p : parts) {
      if (p.requires_grad) gps.push_back({p.grad, off, p.cols()});
      off += p.cols();
    }
    mark_output(out);
    record(out, [og = out.grad, gps, R, W]() {
      for (const Part& gp : gps)
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < gp.w; ++c)
            (*gp.grad)[static_cast<std::size_t>(r) * gp.w + c] +=
                (*og)[static_cast<std::size_t>(r) * W + gp.off + c];
    });
  }
  return out;
}

Tensor mean_tensors(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw UsageError("mean_tensors: empty input list");
  for (const Tensor& x : xs) check_same_shape(x, xs[0], "mean_tensors");
  Tensor out = Tensor::zeros(xs[0].shape);
  const std::size_t n = out.data->size();
  for (const Tensor& x : xs)
    for (std::size_t i = 0; i < n; ++i) (*out.data)[i] += (*x.data)[i];
  const double inv = 1.0 / static_cast<double>(xs.size());
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] *= inv;
  bool rec = false;
  for (const Tensor& x : xs) rec = rec || x.requires_grad;
  if (rec && active_tape() != nullptr) {
    std::vector<std::shared_ptr<std::vector<double>>> grads;
    for (const Tensor& x : xs)
      if (x.requires_grad) grads.push_back(x.grad);
    mark_output(out);
    record(out, [og = out.grad, grads, inv, n]() {
      for (const auto& g : grads)
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += inv * (*og)[i];
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = Tensor::zeros({1});
  double acc = 0.0;
  for (double v : *x.data) acc += v;
  (*out.data)[0] = acc;
  if (recording({&x})) {
    const std::size_t n = x.data->size();
    mark_output(out);
    record(out, [og = out.grad, xg = x.grad, n]() {
      const double g = (*og)[0];
      for (std::size_t i = 0; i < n; ++i) (*xg)[i] += g;
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw ConfigError("dropout: p must be in [0,1)");
  if (p == 0.0) return x;
  Tensor out = Tensor::zeros(x.shape);
  const std::size_t n = x.data->size();
  auto mask = std::make_shared<std::vector<double>>(n);
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < n; ++i) {
    (*mask)[i] = rng.uniform() < p ? 0.0 : keep_scale;
    (*out.data)[i] = (*x.data)[i] * (*mask)[i];
  }
  if (recording({&x})) {
    mark_output(out);
    record(out, [og = out.grad, xg = x.grad, mask, n]() {
      for (std::size_t i = 0; i < n; ++i) (*xg)[i] += (*og)[i] * (*mask)[i];
    });
  }
  return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
  check_2d(table, "embedding_lookup");
  const int V = table.rows(), D = table.cols();
  for (int id : ids) {
    if (id < 0 || id >= V) {
      throw UsageError("embedding_lookup: id " + std::to_string(id) + " outside table of " +
                       std::to_string(V) + " rows");
    }
  }
  const int T = static_cast<int>(ids.size());
  Tensor out = Tensor::zeros({T, D});
  for (int t = 0; t < T; ++t)
    for (int d = 0; d < D; ++d) out.at(t, d) = table.at(ids[t], d);
  if (recording({&table})) {
    mark_output(out);
    record(out, [og = out.grad, tg = table.grad, ids, T, D]() {
      for (int t = 0; t < T; ++t)
        for (int d = 0; d < D; ++d)
          (*tg)[static_cast<std::size_t>(ids[t]) * D + d] +=
              (*og)[static_cast<std::size_t>(t) * D + d];
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     double label_smoothing) {
  check_2d(logits, "cross_entropy");
  const int T = logits.rows(), C = logits.cols();
  if (static_cast<int>(targets.size()) != T) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(T) + " rows");
  }
  for (int y : targets) {
    if (y < 0 || y >= C) {
      throw UsageError("cross_entropy: target " + std::to_string(y) + " outside [0," +
                       std::to_string(C) + ")");
    }
  }
  const double s = label_smoothing;
  Tensor out = Tensor::zeros({1});
  // cache softmax for the backward rule
  auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(T) * C);
  double loss = 0.0;
  for (int t = 0; t < T; ++t) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < C; ++c) mx = std::max(mx, logits.at(t, c));
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(logits.at(t, c) - mx);
    const double logz = mx + std::log(z);
    double mean_logit = 0.0;
    for (int c = 0; c < C; ++c) {
      mean_logit += logits.at(t, c);
      (*probs)[static_cast<std::size_t>(t) * C + c] = std::exp(logits.at(t, c) - logz);
    }
    mean_logit /= C;
    loss += logz - (1.0 - s) * logits.at(t, targets[t]) - s * mean_logit;
  }
  (*out.data)[0] = loss;
  if (recording({&logits})) {
    mark_output(out);
    record(out, [og = out.grad, lg = logits.grad, probs, targets, T, C, s]() {
      const double g = (*og)[0];
      for (int t = 0; t < T; ++t) {
        double* dl = lg->data() + static_cast<std::size_t>(t) * C;
        const double* p = probs->data() + static_cast<std::size_t>(t) * C;
        for (int c = 0; c < C; ++c) {
          double target_mass = (c == targets[t] ? 1.0 - s : 0.0) + s / C;
          dl[c] += g * (p[c] - target_mass);
        }
      }
    });
  }
  return out;
}

Tensor mask_fill(const Tensor& x, const std::vector<std::uint8_t>& allowed, double value) {
  if (allowed.size() != x.data->size()) {
    throw ShapeError("mask_fill: mask has " + std::to_string(allowed.size()) +
                     " entries for tensor " + shape_str(x.shape));
  }
  Tensor out = Tensor::zeros(x.shape);
  const std::size_t n = x.data->size();
  for (std::size_t i = 0; i < n; ++i) (*out.data)[i] = allowed[i] ? (*x.data)[i] : value;
  if (recording({&x})) {
    mark_output(out);
    record(out, [og = out.grad, xg = x.grad, allowed, n]() {
      for (std::size_t i = 0; i < n; ++i)
        if (allowed[i]) (*xg)[i] += (*og)[i];
    });
  }
  return out;
}

AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     const std::vector<std::uint8_t>* mask) {
  check_2d(q, "scaled_dot_attention");
  check_2d(k, "scaled_dot_attention");
  check_2d(v, "scaled_dot_attention");
  const int D = q.cols();
  if (k.cols() != D || v.cols() != D) {
    throw ShapeError("scaled_dot_attention: dims differ, q " + shape_str(q.shape) + " k " +
                     shape_str(k.shape) + " v " + shape_str(v.shape));
  }
  if (k.rows() != v.rows()) {
    throw ShapeError("scaled_dot_attention: key/value counts differ");
  }
  const int Tq = q.rows(), Tk = k.rows();
  if (mask != nullptr) {
    if (static_cast<int>(mask->size()) != Tq * Tk) {
      throw ShapeError("scaled_dot_attention: mask size mismatch");
    }
    for (int r = 0; r < Tq; ++r) {
      bool any = false;
      for (int c = 0; c < Tk; ++c) any = any || (*mask)[static_cast<std::size_t>(r) * Tk + c];
      if (!any) {
        throw UsageError("scaled_dot_attention: degenerate mask, query row " + std::to_string(r) +
                         " has every key masked");
      }
    }
  }
  Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(D)));
  if (mask != nullptr) logits = mask_fill(logits, *mask);
  Tensor weights = softmax_rows(logits);
  Tensor out = matmul(weights, v);
  return {out, weights};
}

Tensor sinusoidal_positions(int frames, int dim) {
  Tensor pe = Tensor::zeros({frames, dim});
  for (int t = 0; t < frames; ++t) {
    for (int i = 0; i < dim; i += 2) {
      const double rate = std::pow(10000.0, -static_cast<double>(i) / dim);
      pe.at(t, i) = std::sin(t * rate);
      if (i + 1 < dim) pe.at(t, i + 1) = std::cos(t * rate);
    }
  }
  return pe;
}

}  // namespace cobra
