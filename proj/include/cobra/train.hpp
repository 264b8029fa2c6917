// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cobra/analysis.hpp"
#include "cobra/checkpoint.hpp"
#include "cobra/config.hpp"
#include "cobra/data.hpp"
#include "cobra/objective.hpp"

namespace cobra {

struct LossParts {
  Tensor total;
  double ctc_audio = 0.0;
  double ctc_video = 0.0;
  double ce = 0.0;
};

/// Hybrid loss of one utterance. `audio_feats` is expected to already carry
/// any train-time noise/masking. A non-null `dropout_rng` activates dropout
/// at the configured rate (training passes one, evaluation never does).
LossParts utterance_loss(const Model& model, const Tensor& audio_feats, const Tensor& video_feats,
                         const std::vector<int>& transcript, double label_smoothing = 0.0,
                         Rng* dropout_rng = nullptr);

std::vector<int> decode_utterance(const Model& model, const Tensor& audio_feats,
                                  const Tensor& video_feats, const BeamOptions& opts);

struct EpochLog {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double ctc_audio = 0.0;
  double ctc_video = 0.0;
  double ce = 0.0;
  double eval_wer = 0.0;
};

struct TrainResult {
  std::string checkpoint_path;
  std::string log_path;
  std::vector<EpochLog> logs;
  int best_epoch = 0;
  double best_wer = 0.0;
};

/// Full training run: per-utterance AdamW steps under a cosine schedule with
/// warm-up, train-time noise at uniform SNR, per-epoch clean-decode WER, best
/// checkpoint kept (ties go to the later epoch). Deterministic per seed.
TrainResult train_model(const RunConfig& rc, Variant variant);

/// Clean condition is encoded as an empty optional.
using EvalCondition = std::optional<NoiseSpec>;

std::string condition_label(const EvalCondition& c);

/// Deterministic per-(condition, utterance) noise; the draw does not depend
/// on the model, so variants face identical corruption.
Tensor corrupt_audio(const Utterance& u, const EvalCondition& c, const TaskTemplates& templates,
                     std::uint64_t seed);

/// Corpus WER (total edits / total reference tokens) under one condition.
double evaluate_condition(const Model& model, const std::vector<Utterance>& utts,
                          const EvalCondition& c, const TaskTemplates& templates,
                          const BeamOptions& opts, std::uint64_t seed);

struct WerRow {
  std::string variant;
  std::vector<std::pair<std::string, double>> cells;  // label -> wer
};

/// One row per variant: clean first, then noise x descending SNR per config order.
WerRow evaluate_grid(const Model& model, const Dataset& eval_set, const RunConfig& rc);
std::string wer_csv(const WerRow& row);

/// Per condition, mean influence statistics over the eval
/// set (clean condition is emitted once per noise type, SNR = +inf).
std::vector<InfluenceReport> snr_influence_sweep(const Model& model, const Dataset& eval_set,
                                                 const RunConfig& rc);

std::string bench_csv(const std::vector<int>& fm_values, const std::vector<int>& fb_values,
                      int dim);

}  // namespace cobra
