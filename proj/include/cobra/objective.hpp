// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "cobra/model.hpp"
#include "cobra/tensor.hpp"

namespace cobra {

/// Least frames a CTC alignment of `target` can occupy: one per label plus a
/// separating blank per adjacent repeat.
int ctc_min_frames(const std::vector<int>& target);

/// Negative log-likelihood of `target` under per-frame log-probs
/// [T x (V+1)], blank = 0, computed by the forward algorithm in log space.
/// Differentiable w.r.t. log_probs. Throws UsageError when T cannot hold the
/// target (an infeasible alignment, rather than returning +inf).
Tensor ctc_nll(const Tensor& log_probs, const std::vector<int>& target);

/// log of the total probability mass of alignments whose collapse *starts
/// with* `prefix` (1 -> 0.0 for the empty prefix, -inf when infeasible).
/// Plain value, no gradient.
double ctc_prefix_score(const std::vector<int>& prefix, const Tensor& ctc_log_probs);

/// Incremental prefix scorer used by the beam search: keeps per-hypothesis
/// gamma vectors so each one-token extension is O(T).
class CtcPrefixScorer {
 public:
  explicit CtcPrefixScorer(const Tensor& ctc_log_probs);  // [T x (V+1)], blank = 0

  struct State {
    std::vector<double> gamma_n;  // per-frame: collapse == prefix, last emission non-blank
    std::vector<double> gamma_b;  // per-frame: collapse == prefix, last emission blank
    int last_token = -1;          // -1 for the empty prefix
  };

  State initial() const;
  /// Prefix score of state+token and the successor state.
  std::pair<double, State> extend(const State& s, int token) const;
  /// Complete-sequence log-probability of the prefix held in `s`.
  double finish(const State& s) const;

 private:
  int frames_ = 0;
  int classes_ = 0;
  std::vector<double> logp_;  // row-major copy
  double lp(int t, int k) const { return logp_[static_cast<std::size_t>(t) * classes_ + k]; }
};

/// Weighted hybrid objective: w * (audio CTC NLL + video CTC NLL) + (1-w) * CE of
/// the shifted target under the decoder logits. Pass an undefined video_logp
/// to drop the video term (audio-only variant).
Tensor hybrid_loss(const Tensor& audio_ctc_logp, const Tensor& video_ctc_logp,
                   const Tensor& decoder_logits, const std::vector<int>& target,
                   const ModelConfig& cfg, double label_smoothing = 0.0);

/// lambda-weighted score; the unused side is skipped at the boundaries so an
/// infinite CTC score cannot turn 0 * -inf into NaN.
inline double combined_score(double lambda, double ctc_logp, double att_logp,
                             double length_bonus, std::size_t n_tokens) {
  double s = length_bonus * static_cast<double>(n_tokens);
  if (lambda > 0.0) s += lambda * ctc_logp;
  if (lambda < 1.0) s += (1.0 - lambda) * att_logp;
  return s;
}

struct Hypothesis {
  std::vector<int> tokens;
  double att_logp = 0.0;
  double ctc_logp = 0.0;

  double combined(double lambda, double length_bonus = 0.0) const {
    return combined_score(lambda, ctc_logp, att_logp, length_bonus, tokens.size());
  }
};

struct BeamOptions {
  int beam = 4;
  double lambda = 0.3;  // weight on the CTC prefix score
  int max_len = 16;
  double length_bonus = 0.0;
};

/// Label-synchronous joint beam search over decoder log-probs and CTC prefix
/// scores; always returns a finished hypothesis (possibly empty).
Hypothesis beam_search(const Model& model, const Tensor& audio_memory,
                       const Tensor& ctc_log_probs, const BeamOptions& opts);

/// Edit distance (unit costs) divided by max(1, |ref|).
double wer(const std::vector<int>& hyp, const std::vector<int>& ref);
int edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref);

}  // namespace cobra
