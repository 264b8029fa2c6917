// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cobra/common.hpp"
#include "cobra/rng.hpp"

namespace cobra {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

/// Dense 64-bit float tensor. Copies share the underlying buffers, so a
/// Tensor behaves like a lightweight handle; the gradient buffer exists only
/// when the tensor participates in differentiation.
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<double>> data;
  std::shared_ptr<std::vector<double>> grad;
  bool requires_grad = false;

  Tensor() = default;

  static Tensor zeros(Shape s, bool requires_grad = false);
  static Tensor full(Shape s, double value);
  static Tensor from(Shape s, std::vector<double> values);
  static Tensor gaussian(Shape s, double stddev, Rng& rng, bool requires_grad = false);

  std::int64_t numel() const { return data ? static_cast<std::int64_t>(data->size()) : 0; }
  bool defined() const { return static_cast<bool>(data); }

  int rows() const;
  int cols() const;

  double& at(int r, int c) { return (*data)[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return (*data)[static_cast<std::size_t>(r) * cols() + c]; }

  double* ptr() { return data->data(); }
  const double* ptr() const { return data->data(); }

  /// Value of a scalar (1-element) tensor.
  double item() const;

  void ensure_grad();
  void zero_grad();

  /// Deep copy of values only (fresh buffers, no grad, no tape link).
  Tensor clone_values() const;

  bool all_finite() const;
};

/// Records the forward pass; backward() replays it in exact reverse order.
/// Ops append nodes only while a TapeScope makes some tape active.
class Tape {
 public:
  struct Node {
    std::shared_ptr<std::vector<double>> out_grad;
    std::function<void()> pull;
  };

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  std::vector<Node> nodes_;
};

class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

Tape* active_tape();

/// Seeds d(loss)/d(loss) = 1 and pulls gradients back through the tape.
/// Intermediate grads are reset each call; leaf grads accumulate across calls
/// until explicitly zeroed.
void backward(const Tensor& loss, Tape& tape);

// ---------------------------------------------------------------------------
// Differentiable ops. All are pure given (inputs, rng state) and record onto
// the active tape when any input requires a gradient.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
/// x: [T x D], bias: [D]; adds bias to every row.
Tensor add_rowwise(const Tensor& x, const Tensor& bias);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Per-channel 1-D convolution along the frame axis, same padding. kernel: [K x D], K odd.
Tensor depthwise_conv1d(const Tensor& x, const Tensor& kernel);

Tensor swish(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Frame-axis concatenation [a || b].
Tensor concat_rows(const Tensor& a, const Tensor& b);
std::pair<Tensor, Tensor> split_rows(const Tensor& x, int top_rows);

Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor concat_cols(const std::vector<Tensor>& parts);

Tensor mean_tensors(const std::vector<Tensor>& xs);
Tensor sum_all(const Tensor& x);

/// Train-only inverted dropout; p == 0 returns the input unchanged.
Tensor dropout(const Tensor& x, double p, Rng& rng);

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids);

/// Sum over rows of label-smoothed NLL. logits: [T x C], targets: T class ids.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     double label_smoothing = 0.0);

/// Entries where allowed == 0 are replaced by a large negative constant
/// (kept finite so downstream values never hold inf).
Tensor mask_fill(const Tensor& x, const std::vector<std::uint8_t>& allowed, double value = -1e30);

struct AttentionResult {
  Tensor out;      // [T_q x D]
  Tensor weights;  // [T_q x T_k], rows sum to 1
};

/// softmax(q k^T / sqrt(D)) v. mask, when given, is row-major [T_q x T_k]
/// with 1 = attend; a fully masked row is a degenerate-mask error.
AttentionResult scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                     const std::vector<std::uint8_t>* mask = nullptr);

/// Sinusoidal positional encoding, rows = frames. Plain values, no grad.
Tensor sinusoidal_positions(int frames, int dim);

}  // namespace cobra
