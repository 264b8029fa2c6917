// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cobra/model.hpp"

namespace cobra {

/// Row-stochastic input-attribution matrix over the global token space
/// [audio frames | video frames | bottleneck].
using RolloutMatrix = Tensor;

/// Attention rollout: per sub-step, embed the head-averaged attention into the
/// global index space (identity rows elsewhere), mix with identity at
/// `residual_weight`, renormalize rows, and left-multiply into the running
/// product. FFN/conv sublayers ride the residual path and are treated as
/// identity.
RolloutMatrix rollout(const AttentionTrace& trace, double residual_weight = 0.5);

struct InfluenceRaw {
  double a_to_a = 0.0;
  double v_to_a = 0.0;
  double v_to_v = 0.0;
  double a_to_v = 0.0;
};

/// Mean rollout mass flowing between the two frame index sets (bottleneck
/// columns mediate but are not terminal, so they are excluded by design).
InfluenceRaw modality_influence(const RolloutMatrix& matrix, const std::vector<int>& audio_idx,
                                const std::vector<int>& video_idx);

/// Normalization by total incoming mass: f_va / (f_aa + f_va) and the
/// symmetric video-side ratio.
std::pair<double, double> normalized_influence(const InfluenceRaw& f);

enum class AttentionScheme { concat, cross, bottleneck };

std::string to_string(AttentionScheme s);
AttentionScheme attention_scheme_from(const std::string& s);

struct CostReport {
  AttentionScheme scheme = AttentionScheme::concat;
  int frames_per_modality = 0;  // F_m
  int bottleneck_len = 0;       // F_b (0 for concat/cross)
  int dim = 0;
  std::uint64_t formula_pairs = 0;    // closed form: (2F_m)^2 or 2(F_m+F_b)^2
  std::uint64_t measured_madds = 0;   // instrumented q.k multiply-adds
};

/// Closed-form query-key pair count next to an instrumented count from
/// actually running the scheme's attention pattern at the given sizes; the
/// two agree up to the factor `dim`.
CostReport attention_cost(int frames_per_modality, int bottleneck_len, AttentionScheme scheme,
                          int dim = 4);

struct InfluenceReport {
  std::string noise_type;
  double snr_db = 0.0;  // +inf marks the clean condition
  double f_va_raw = 0.0;
  double f_av_raw = 0.0;
  double f_va_norm = 0.0;
  double f_av_norm = 0.0;
};

/// CSV with header noise_type,snr_db,f_va_raw,f_av_raw,f_va_norm,f_av_norm,
/// floats at 6 decimals, rows ordered by noise type then descending SNR.
std::string influence_csv(const std::vector<InfluenceReport>& reports);

}  // namespace cobra
