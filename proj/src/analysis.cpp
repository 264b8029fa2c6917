// SPDX-License-Identifier: Apache-2.0
#include "cobra/analysis.hpp"

#include <cmath>
#include <cstdio>

namespace cobra {

RolloutMatrix rollout(const AttentionTrace& trace, double residual_weight) {
  const int n = trace.total_tokens();
  if (n <= 0) throw UsageError("rollout: trace has no tokens");
  Tensor running = Tensor::zeros({n, n});
  for (int i = 0; i < n; ++i) running.at(i, i) = 1.0;

  Tensor step_global = Tensor::zeros({n, n});
  Tensor next = Tensor::zeros({n, n});
  for (const TraceStep& step : trace.steps) {
    const int p = static_cast<int>(step.token_ids.size());
    if (step.attn.shape != Shape{p, p}) {
      throw DataError("rollout: sub-step " + std::to_string(step.sub_step) + " matrix " +
                      shape_str(step.attn.shape) + " does not cover " + std::to_string(p) +
                      " tokens");
    }
    for (int r = 0; r < p; ++r) {
      double sum = 0.0;
      for (int c = 0; c < p; ++c) sum += step.attn.at(r, c);
      if (std::abs(sum - 1.0) > 1e-6) {
        throw DataError("rollout: sub-step " + std::to_string(step.sub_step) + " row " +
                        std::to_string(r) + " sums to " + std::to_string(sum));
      }
    }
    // A_global: identity everywhere, the sub-step matrix over its tokens.
    std::fill(step_global.data->begin(), step_global.data->end(), 0.0);
    for (int i = 0; i < n; ++i) step_global.at(i, i) = 1.0;
    for (int r = 0; r < p; ++r) {
      const int gr = step.token_ids[r];
      for (int c = 0; c < n; ++c) step_global.at(gr, c) = 0.0;
      for (int c = 0; c < p; ++c) step_global.at(gr, step.token_ids[c]) = step.attn.at(r, c);
    }
    // mix with identity, renormalize, left-multiply
    for (int r = 0; r < n; ++r) {
      double sum = 0.0;
      for (int c = 0; c < n; ++c) {
        double v = (1.0 - residual_weight) * step_global.at(r, c);
        if (r == c) v += residual_weight;
        step_global.at(r, c) = v;
        sum += v;
      }
      for (int c = 0; c < n; ++c) step_global.at(r, c) /= sum;
    }
    std::fill(next.data->begin(), next.data->end(), 0.0);
    for (int i = 0; i < n; ++i) {
      for (int k = 0; k < n; ++k) {
        const double s = step_global.at(i, k);
        if (s == 0.0) continue;
        for (int j = 0; j < n; ++j) next.at(i, j) += s * running.at(k, j);
      }
    }
    std::swap(*next.data, *running.data);
  }
  return running;
}

InfluenceRaw modality_influence(const RolloutMatrix& matrix, const std::vector<int>& audio_idx,
                                const std::vector<int>& video_idx) {
  if (audio_idx.empty() || video_idx.empty()) {
    throw UsageError("modality_influence: empty index set");
  }
  const int n = matrix.rows();
  for (int i : audio_idx) {
    for (int j : video_idx) {
      if (i == j) throw UsageError("modality_influence: index sets overlap at " + std::to_string(i));
    }
  }
  for (int i : audio_idx)
    if (i < 0 || i >= n) throw UsageError("modality_influence: audio index out of bounds");
  for (int j : video_idx)
    if (j < 0 || j >= n) throw UsageError("modality_influence: video index out of bounds");

  auto mean_block = [&](const std::vector<int>& rows, const std::vector<int>& cols) {
    double acc = 0.0;
    for (int i : rows)
      for (int j : cols) acc += matrix.at(i, j);
    return acc / (static_cast<double>(rows.size()) * static_cast<double>(cols.size()));
  };
  InfluenceRaw f;
  f.a_to_a = mean_block(audio_idx, audio_idx);
  f.v_to_a = mean_block(audio_idx, video_idx);
  f.v_to_v = mean_block(video_idx, video_idx);
  f.a_to_v = mean_block(video_idx, audio_idx);
  return f;
}

std::pair<double, double> normalized_influence(const InfluenceRaw& f) {
  const double denom_a = f.a_to_a + f.v_to_a;
  const double denom_v = f.v_to_v + f.a_to_v;
  if (denom_a <= 0.0 || denom_v <= 0.0) {
    throw DataError("normalized_influence: degenerate rollout, zero incoming mass");
  }
  return {f.v_to_a / denom_a, f.a_to_v / denom_v};
}

std::string to_string(AttentionScheme s) {
  switch (s) {
    case AttentionScheme::concat: return "concat";
    case AttentionScheme::cross: return "cross";
    case AttentionScheme::bottleneck: return "bottleneck";
  }
  return "?";
}

AttentionScheme attention_scheme_from(const std::string& s) {
  if (s == "concat") return AttentionScheme::concat;
  if (s == "cross") return AttentionScheme::cross;
  if (s == "bottleneck") return AttentionScheme::bottleneck;
  throw ConfigError("unknown attention scheme '" + s + "'");
}

namespace {

// Runs one q.k^T score pass at the given sizes and counts every multiply-add.
std::uint64_t score_pass_madds(int n_queries, int n_keys, int dim, Rng& rng) {
  Tensor q = Tensor::gaussian({n_queries, dim}, 1.0, rng);
  Tensor k = Tensor::gaussian({n_keys, dim}, 1.0, rng);
  std::uint64_t madds = 0;
  volatile double sink = 0.0;  // keep the loop honest
  for (int i = 0; i < n_queries; ++i) {
    for (int j = 0; j < n_keys; ++j) {
      double acc = 0.0;
      for (int d = 0; d < dim; ++d) {
        acc += q.at(i, d) * k.at(j, d);
        ++madds;
      }
      sink = acc;
    }
  }
  (void)sink;
  return madds;
}

}  // namespace

CostReport attention_cost(int frames_per_modality, int bottleneck_len, AttentionScheme scheme,
                          int dim) {
  if (frames_per_modality < 1) throw ConfigError("attention_cost: F_m must be >= 1");
  if (scheme == AttentionScheme::bottleneck && bottleneck_len < 1) {
    throw ConfigError("attention_cost: bottleneck scheme needs F_b >= 1");
  }
  const std::uint64_t fm = static_cast<std::uint64_t>(frames_per_modality);
  const std::uint64_t fb = static_cast<std::uint64_t>(bottleneck_len);
  CostReport r;
  r.scheme = scheme;
  r.frames_per_modality = frames_per_modality;
  r.bottleneck_len = scheme == AttentionScheme::bottleneck ? bottleneck_len : 0;
  r.dim = dim;
  Rng rng(stream_seed(0x9c0babe5ull, {fm, fb, static_cast<std::uint64_t>(scheme)}));
  switch (scheme) {
    case AttentionScheme::concat:
      // full self-attention over both concatenated streams
      r.formula_pairs = (2 * fm) * (2 * fm);
      r.measured_madds = score_pass_madds(2 * frames_per_modality, 2 * frames_per_modality, dim, rng);
      break;
    case AttentionScheme::cross:
      // per-modality self-attention plus pairwise cross-attention; same bound
      r.formula_pairs = (2 * fm) * (2 * fm);
      r.measured_madds = score_pass_madds(frames_per_modality, frames_per_modality, dim, rng) +
                         score_pass_madds(frames_per_modality, frames_per_modality, dim, rng) +
                         score_pass_madds(frames_per_modality, frames_per_modality, dim, rng) +
                         score_pass_madds(frames_per_modality, frames_per_modality, dim, rng);
      break;
    case AttentionScheme::bottleneck:
      // two blocks, each self-attending over frames plus bottleneck tokens
      r.formula_pairs = 2 * (fm + fb) * (fm + fb);
      r.measured_madds =
          score_pass_madds(frames_per_modality + bottleneck_len,
                           frames_per_modality + bottleneck_len, dim, rng) +
          score_pass_madds(frames_per_modality + bottleneck_len,
                           frames_per_modality + bottleneck_len, dim, rng);
      break;
  }
  return r;
}

std::string influence_csv(const std::vector<InfluenceReport>& reports) {
  std::string out = "noise_type,snr_db,f_va_raw,f_av_raw,f_va_norm,f_av_norm\n";
  char buf[256];
  for (const InfluenceReport& r : reports) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.noise_type.c_str(),
                  r.snr_db, r.f_va_raw, r.f_av_raw, r.f_va_norm, r.f_av_norm);
    out += buf;
  }
  return out;
}

}  // namespace cobra
