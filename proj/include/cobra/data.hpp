// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cobra/rng.hpp"
#include "cobra/tensor.hpp"

namespace cobra {

/// Synthetic audio-visual task: every token has a distinct audio template;
/// tokens within the same viseme class share one video template, so video
/// alone cannot separate them (the bounded lip-reading ambiguity).
struct SyntheticTaskSpec {
  int vocab_size = 12;      // V, tokens 1..V
  int viseme_classes = 4;   // C < V
  int frames_per_token = 4; // audio frames per token
  int audio_feat_dim = 20;
  int video_feat_dim = 12;
  double template_jitter_std = 0.1;
  int utt_len_min = 3;
  int utt_len_max = 6;
  int video_rate = 2;       // audio frames per video frame
  std::uint64_t seed = 0x5eed;

  void validate() const;
  int viseme_of(int token) const;  // token 1..V -> class 0..C-1
  int video_frames_per_token() const { return frames_per_token / video_rate; }
};

struct Utterance {
  std::string id;
  std::vector<int> transcript;  // tokens 1..V
  Tensor audio;                 // [F_a x audio_feat_dim]
  Tensor video;                 // [F_v x video_feat_dim]
};

enum class NoiseKind { white, pink, babble_surrogate };

std::string to_string(NoiseKind k);
NoiseKind noise_kind_from(const std::string& s);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::white;
  double snr_db = 0.0;
};

/// Token/viseme templates drawn once from spec.seed; all utterances of a task
/// share them.
class TaskTemplates {
 public:
  explicit TaskTemplates(const SyntheticTaskSpec& spec);
  const Tensor& audio_of(int token) const;   // [frames_per_token x audio_feat_dim]
  const Tensor& video_of(int viseme) const;  // [video_frames_per_token x video_feat_dim]
  const SyntheticTaskSpec& spec() const { return spec_; }

 private:
  SyntheticTaskSpec spec_;
  std::vector<Tensor> audio_templates_;
  std::vector<Tensor> video_templates_;
};

Utterance generate_utterance(const TaskTemplates& templates, Rng& rng, std::string id);

/// white: iid N(0,1). pink: white shaped by a cumulative first-order IIR
/// cascade to a ~1/f power spectrum along time, unit-variance normalized.
/// babble_surrogate: unit-variance sum of k_streams clean synthetic audio
/// streams (dim must equal the task's audio_feat_dim).
Tensor synth_noise(NoiseKind kind, int length, int dim, Rng& rng, const TaskTemplates& templates,
                   int k_streams = 6);

double mean_power(const Tensor& x);

/// Rescales noise so 10*log10(P_signal / P_noise_scaled) == snr_db and adds it.
Tensor mix_at_snr(const Tensor& signal, const Tensor& noise, double snr_db);

/// Zeroes n_masks random contiguous frame spans of length <= max_span.
Tensor time_mask(const Tensor& x, int max_span, int n_masks, Rng& rng);

struct Dataset {
  SyntheticTaskSpec spec;
  std::vector<Utterance> utterances;
};

// Dataset file: magic "CBDS" | u32 version | u32 spec text length |
// key=value spec block | u32 count | records (id, transcript, audio tensor,
// video tensor), all little-endian, f64 row-major tensors.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

struct BuildResult {
  std::string train_path;
  std::string eval_path;
};

/// Train/eval splits with disjoint ids, bit-identical for a fixed seed.
BuildResult build_dataset(const SyntheticTaskSpec& spec, int n_train, int n_eval,
                          std::uint64_t seed, const std::string& out_dir);

}  // namespace cobra
