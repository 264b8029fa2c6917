// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cobra/data.hpp"
#include "cobra/model.hpp"
#include "cobra/objective.hpp"

namespace cobra {

/// One flat key=value config drives every command. Every field has a coded
/// default; an unknown key is a hard error so typos cannot silently pass.
struct RunConfig {
  // model
  int dim = 64;
  int layers = 6;
  int fusion_layer = 2;
  int bottleneck_len = 8;
  int heads = 4;
  int ffn_dim = 256;
  int conv_kernel = 7;
  std::string strategy = "sequential";
  int decoder_layers = 2;
  double w_ctc = 0.3;
  double bottleneck_init_std = 0.02;
  double dropout = 0.0;

  // synthetic task
  int vocab_size = 12;
  int viseme_classes = 4;
  int frames_per_token = 4;
  int audio_feat_dim = 20;
  int video_feat_dim = 12;
  double jitter_std = 0.1;
  int utt_len_min = 3;
  int utt_len_max = 6;
  int video_rate = 2;

  // dataset build
  int n_train = 2000;
  int n_eval = 150;

  // training
  int epochs = 6;
  double lr_peak = 1.5e-3;
  double warmup_epochs = 1.0;
  double weight_decay = 0.01;
  double label_smoothing = 0.0;
  double grad_clip = 5.0;
  int curriculum_epochs = 0;      // first epochs restricted to short utterances
  int curriculum_max_len = 4;
  std::string train_noise = "babble";
  double train_snr_min = -5.0;
  double train_snr_max = 20.0;
  int time_mask_spans = 1;
  int time_mask_max_span = 2;

  // decoding / evaluation
  int beam = 4;
  double decode_lambda = 0.3;
  double length_bonus = 0.0;
  int max_decode_len = 0;  // 0 -> utt_len_max + 2
  std::string eval_noise_types = "babble,pink,white";
  std::string eval_snr_grid = "12.5,7.5,2.5,-2.5,-7.5";
  int analyze_utts = 0;  // cap for the influence sweep, 0 = whole eval set

  // attention-cost benchmark sweep
  std::string bench_fm = "50,100,150,200,250,300,350,400";
  std::string bench_fb = "4,16,32";
  int bench_dim = 4;

  // io
  std::string out_dir = "out";
  std::uint64_t seed = 1;

  void validate() const;
  ModelConfig model_config() const;
  SyntheticTaskSpec task_spec() const;
  BeamOptions beam_options() const;
  std::vector<NoiseKind> eval_noise_kinds() const;
  std::vector<double> eval_snrs() const;  // descending
  std::vector<int> bench_fm_values() const;
  std::vector<int> bench_fb_values() const;

  std::string train_dataset_path() const;
  std::string eval_dataset_path() const;
  std::string checkpoint_path(Variant v) const;
  std::string train_log_path(Variant v) const;
  std::string wer_csv_path(Variant v) const;
  std::string influence_csv_path(Variant v) const;
  std::string bench_csv_path() const;
};

/// Parses `# comment` / `key=value` lines; unknown keys raise ConfigError.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Applies the COBRA_OUT environment override to out_dir, when set.
void apply_env_overrides(RunConfig& rc);

}  // namespace cobra
