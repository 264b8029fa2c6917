// SPDX-License-Identifier: Apache-2.0
//
// Label-synchronous beam search combining decoder log-probs with CTC prefix
// scores, plus WER scoring.
#include <algorithm>
#include <cmath>
#include <limits>

#include "cobra/objective.hpp"

namespace cobra {

namespace {

struct LiveHyp {
  std::vector<int> tokens;
  double att_logp = 0.0;
  CtcPrefixScorer::State ctc_state;
  double ctc_psi = 0.0;  // prefix score of `tokens`

  double combined(const BeamOptions& o) const {
    return combined_score(o.lambda, ctc_psi, att_logp, o.length_bonus, tokens.size());
  }
};

// log-softmax of one logits row
std::vector<double> row_log_probs(const Tensor& logits, int row) {
  const int C = logits.cols();
  std::vector<double> out(C);
  double mx = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < C; ++c) mx = std::max(mx, logits.at(row, c));
  double z = 0.0;
  for (int c = 0; c < C; ++c) z += std::exp(logits.at(row, c) - mx);
  const double logz = mx + std::log(z);
  for (int c = 0; c < C; ++c) out[c] = logits.at(row, c) - logz;
  return out;
}

}  // namespace

Hypothesis beam_search(const Model& model, const Tensor& audio_memory,
                       const Tensor& ctc_log_probs, const BeamOptions& opts) {
  if (opts.beam < 1) throw UsageError("beam_search: beam must be >= 1");
  if (opts.lambda < 0.0 || opts.lambda > 1.0) {
    throw UsageError("beam_search: lambda must be in [0,1]");
  }
  const ModelConfig& cfg = model.config();
  CtcPrefixScorer scorer(ctc_log_probs);

  // The end token competes with ordinary tokens for beam slots; a hypothesis
  // is finished only when its eos expansion survives the cut. With beam = 1
  // this degenerates to the greedy argmax rollout.
  struct Candidate {
    LiveHyp hyp;
    bool finished = false;
    double score = 0.0;
  };

  std::vector<LiveHyp> live(1);
  live[0].ctc_state = scorer.initial();

  std::vector<Hypothesis> ended;
  for (int step = 0; step <= opts.max_len && !live.empty(); ++step) {
    std::vector<Candidate> candidates;
    for (const LiveHyp& h : live) {
      std::vector<int> prefix;
      prefix.reserve(h.tokens.size() + 1);
      prefix.push_back(cfg.sos_id());
      prefix.insert(prefix.end(), h.tokens.begin(), h.tokens.end());
      Tensor logits = model.decoder_logits(prefix, audio_memory);
      const std::vector<double> logp = row_log_probs(logits, logits.rows() - 1);

      Candidate fin;
      fin.hyp = h;
      fin.hyp.att_logp += logp[ModelConfig::eos_id];
      fin.hyp.ctc_psi = scorer.finish(h.ctc_state);  // complete-sequence probability
      fin.finished = true;
      fin.score = fin.hyp.combined(opts);
      candidates.push_back(std::move(fin));

      if (step == opts.max_len) continue;  // length budget reached, eos only
      for (int token = 1; token <= cfg.vocab_size; ++token) {
        auto [psi, next_state] = scorer.extend(h.ctc_state, token);
        Candidate n;
        n.hyp.tokens = h.tokens;
        n.hyp.tokens.push_back(token);
        n.hyp.att_logp = h.att_logp + logp[token];
        n.hyp.ctc_state = std::move(next_state);
        n.hyp.ctc_psi = psi;
        n.score = n.hyp.combined(opts);
        candidates.push_back(std::move(n));
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
    if (static_cast<int>(candidates.size()) > opts.beam) candidates.resize(opts.beam);
    live.clear();
    for (Candidate& c : candidates) {
      if (c.finished) {
        Hypothesis f;
        f.tokens = std::move(c.hyp.tokens);
        f.att_logp = c.hyp.att_logp;
        f.ctc_logp = c.hyp.ctc_psi;
        ended.push_back(std::move(f));
      } else {
        live.push_back(std::move(c.hyp));
      }
    }
  }

  Hypothesis best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const Hypothesis& h : ended) {
    const double s = h.combined(opts.lambda, opts.length_bonus);
    if (s > best_score) {
      best_score = s;
      best = h;
    }
  }
  return best;
}

int edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref) {
  const std::size_t H = hyp.size(), R = ref.size();
  std::vector<int> prev(R + 1), cur(R + 1);
  for (std::size_t j = 0; j <= R; ++j) prev[j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= H; ++i) {
    cur[0] = static_cast<int>(i);
    for (std::size_t j = 1; j <= R; ++j) {
      const int sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[R];
}

double wer(const std::vector<int>& hyp, const std::vector<int>& ref) {
  if (ref.empty() && hyp.empty()) return 0.0;
  // empty reference: count hypothesis tokens against a unit denominator
  const double denom = ref.empty() ? 1.0 : static_cast<double>(ref.size());
  return static_cast<double>(edit_distance(hyp, ref)) / denom;
}

}  // namespace cobra
