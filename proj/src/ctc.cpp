// SPDX-License-Identifier: Apache-2.0
//
// Log-space CTC forward algorithm over the blank-augmented label lattice,
// with an alpha/beta backward rule, plus the incremental prefix scorer used
// for joint decoding.
#include <cmath>
#include <limits>

#include "cobra/objective.hpp"

namespace cobra {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-(std::abs(a - b))));
}

void check_ctc_inputs(const Tensor& log_probs, const std::vector<int>& target) {
  if (log_probs.shape.size() != 2) {
    throw ShapeError("ctc: log_probs must be [T x (V+1)], got " + shape_str(log_probs.shape));
  }
  const int classes = log_probs.cols();
  for (int y : target) {
    if (y < 1 || y >= classes) {
      throw UsageError("ctc: target token " + std::to_string(y) + " outside 1.." +
                       std::to_string(classes - 1));
    }
  }
}

// Extended label sequence blank,l1,blank,l2,...,blank.
std::vector<int> extended_labels(const std::vector<int>& target) {
  std::vector<int> ext(2 * target.size() + 1, 0);
  for (std::size_t u = 0; u < target.size(); ++u) ext[2 * u + 1] = target[u];
  return ext;
}

// alpha[t][s] over the extended lattice; emission of frame t included.
std::vector<std::vector<double>> ctc_alpha(const double* lp, int T, int C,
                                           const std::vector<int>& ext) {
  const int S = static_cast<int>(ext.size());
  std::vector<std::vector<double>> a(T, std::vector<double>(S, kNegInf));
  a[0][0] = lp[ext[0]];
  if (S > 1) a[0][1] = lp[ext[1]];
  for (int t = 1; t < T; ++t) {
    const double* row = lp + static_cast<std::size_t>(t) * C;
    for (int s = 0; s < S; ++s) {
      double acc = a[t - 1][s];
      if (s >= 1) acc = log_add(acc, a[t - 1][s - 1]);
      if (s >= 2 && ext[s] != 0 && ext[s] != ext[s - 2]) acc = log_add(acc, a[t - 1][s - 2]);
      a[t][s] = acc == kNegInf ? kNegInf : acc + row[ext[s]];
    }
  }
  return a;
}

// beta[t][s]: completion probability from (t,s), emission of frame t included.
std::vector<std::vector<double>> ctc_beta(const double* lp, int T, int C,
                                          const std::vector<int>& ext) {
  const int S = static_cast<int>(ext.size());
  std::vector<std::vector<double>> b(T, std::vector<double>(S, kNegInf));
  const double* last = lp + static_cast<std::size_t>(T - 1) * C;
  b[T - 1][S - 1] = last[ext[S - 1]];
  if (S > 1) b[T - 1][S - 2] = last[ext[S - 2]];
  for (int t = T - 2; t >= 0; --t) {
    const double* row = lp + static_cast<std::size_t>(t) * C;
    for (int s = S - 1; s >= 0; --s) {
      double acc = b[t + 1][s];
      if (s + 1 < S) acc = log_add(acc, b[t + 1][s + 1]);
      if (s + 2 < S && ext[s + 2] != 0 && ext[s + 2] != ext[s]) acc = log_add(acc, b[t + 1][s + 2]);
      b[t][s] = acc == kNegInf ? kNegInf : acc + row[ext[s]];
    }
  }
  return b;
}

}  // namespace

int ctc_min_frames(const std::vector<int>& target) {
  int n = static_cast<int>(target.size());
  for (std::size_t u = 1; u < target.size(); ++u) {
    if (target[u] == target[u - 1]) ++n;
  }
  return n;
}

Tensor ctc_nll(const Tensor& log_probs, const std::vector<int>& target) {
  check_ctc_inputs(log_probs, target);
  const int T = log_probs.rows(), C = log_probs.cols();
  if (T < ctc_min_frames(target)) {
    throw UsageError("ctc_nll: infeasible alignment, " + std::to_string(T) +
                     " frames cannot carry a target needing " +
                     std::to_string(ctc_min_frames(target)));
  }
  const std::vector<int> ext = extended_labels(target);
  const int S = static_cast<int>(ext.size());
  const double* lp = log_probs.ptr();
  const auto alpha = ctc_alpha(lp, T, C, ext);
  double log_p = alpha[T - 1][S - 1];
  if (S > 1) log_p = log_add(log_p, alpha[T - 1][S - 2]);

  Tensor out = Tensor::zeros({1});
  (*out.data)[0] = -log_p;

  if (active_tape() != nullptr && log_probs.requires_grad) {
    // d(-log P)/d lp[t,k] = -exp(logsum_{s: ext[s]=k} alpha[t][s]+beta[t][s]-lp[t,ext[s]] - logP)
    Tape* tape = active_tape();
    out.requires_grad = true;
    out.ensure_grad();
    auto pull = [og = out.grad, lg = log_probs.grad, ld = log_probs.data, target, T, C, log_p]() {
      const std::vector<int> ext2 = extended_labels(target);
      const double* lp2 = ld->data();
      const auto a = ctc_alpha(lp2, T, C, ext2);
      const auto b = ctc_beta(lp2, T, C, ext2);
      const int S2 = static_cast<int>(ext2.size());
      const double g = (*og)[0];
      for (int t = 0; t < T; ++t) {
        const double* row = lp2 + static_cast<std::size_t>(t) * C;
        std::vector<double> acc(C, kNegInf);
        for (int s = 0; s < S2; ++s) {
          if (a[t][s] == kNegInf || b[t][s] == kNegInf) continue;
          // alpha and beta both include the frame-t emission; drop one copy
          acc[ext2[s]] = log_add(acc[ext2[s]], a[t][s] + b[t][s] - row[ext2[s]]);
        }
        double* grow = lg->data() + static_cast<std::size_t>(t) * C;
        for (int k = 0; k < C; ++k) {
          if (acc[k] == kNegInf) continue;
          grow[k] += g * -std::exp(acc[k] - log_p);
        }
      }
    };
    tape->nodes_.push_back({out.grad, std::move(pull)});
  }
  return out;
}

CtcPrefixScorer::CtcPrefixScorer(const Tensor& ctc_log_probs) {
  if (ctc_log_probs.shape.size() != 2) {
    throw ShapeError("CtcPrefixScorer: log_probs must be 2-D");
  }
  frames_ = ctc_log_probs.rows();
  classes_ = ctc_log_probs.cols();
  logp_ = *ctc_log_probs.data;
}

CtcPrefixScorer::State CtcPrefixScorer::initial() const {
  State s;
  s.gamma_n.assign(frames_, kNegInf);
  s.gamma_b.assign(frames_, 0.0);
  double acc = 0.0;
  for (int t = 0; t < frames_; ++t) {
    acc += lp(t, 0);
    s.gamma_b[t] = acc;  // all-blank path up to t
  }
  s.last_token = -1;
  return s;
}

std::pair<double, CtcPrefixScorer::State> CtcPrefixScorer::extend(const State& s, int token) const {
  if (token < 1 || token >= classes_) {
    throw UsageError("CtcPrefixScorer: token " + std::to_string(token) + " outside 1.." +
                     std::to_string(classes_ - 1));
  }
  State n;
  n.gamma_n.assign(frames_, kNegInf);
  n.gamma_b.assign(frames_, kNegInf);
  n.last_token = token;

  const bool empty_prefix = s.last_token == -1;
  // First frame can start the new token only when the prefix is empty.
  n.gamma_n[0] = empty_prefix ? lp(0, token) : kNegInf;
  double psi = n.gamma_n[0];
  for (int t = 1; t < frames_; ++t) {
    // mass of the old prefix that may be followed by `token` at frame t
    double phi = s.gamma_b[t - 1];
    if (token != s.last_token) phi = log_add(phi, s.gamma_n[t - 1]);
    n.gamma_n[t] = log_add(n.gamma_n[t - 1], phi) + lp(t, token);
    n.gamma_b[t] = log_add(n.gamma_b[t - 1], n.gamma_n[t - 1]) + lp(t, 0);
    psi = log_add(psi, phi + lp(t, token));
  }
  return {psi, n};
}

double CtcPrefixScorer::finish(const State& s) const {
  if (s.last_token == -1) {
    // empty transcript: the all-blank path
    return s.gamma_b.empty() ? 0.0 : s.gamma_b[frames_ - 1];
  }
  return log_add(s.gamma_n[frames_ - 1], s.gamma_b[frames_ - 1]);
}

double ctc_prefix_score(const std::vector<int>& prefix, const Tensor& ctc_log_probs) {
  CtcPrefixScorer scorer(ctc_log_probs);
  CtcPrefixScorer::State state = scorer.initial();
  if (prefix.empty()) return 0.0;  // every alignment extends the empty prefix
  double score = kNegInf;
  for (int token : prefix) {
    auto [psi, next] = scorer.extend(state, token);
    score = psi;
    state = std::move(next);
  }
  return score;
}

Tensor hybrid_loss(const Tensor& audio_ctc_logp, const Tensor& video_ctc_logp,
                   const Tensor& decoder_logits, const std::vector<int>& target,
                   const ModelConfig& cfg, double label_smoothing) {
  if (cfg.w_ctc < 0.0 || cfg.w_ctc > 1.0) {
    throw ConfigError("hybrid_loss: w_ctc must be in [0,1]");
  }
  Tensor ctc_sum = ctc_nll(audio_ctc_logp, target);
  if (video_ctc_logp.defined()) {
    ctc_sum = add(ctc_sum, ctc_nll(video_ctc_logp, target));
  }
  std::vector<int> shifted = target;
  shifted.push_back(ModelConfig::eos_id);
  Tensor ce = cross_entropy(decoder_logits, shifted, label_smoothing);
  return add(scale(ctc_sum, cfg.w_ctc), scale(ce, 1.0 - cfg.w_ctc));
}

}  // namespace cobra
