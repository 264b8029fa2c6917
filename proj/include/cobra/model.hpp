// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cobra/tensor.hpp"

namespace cobra {

enum class FusionStrategy { sequential, mean };

std::string to_string(FusionStrategy s);
FusionStrategy fusion_strategy_from(const std::string& s);

struct ModelConfig {
  int dim = 64;             // embedding width D
  int layers = 6;           // encoder layers per stream
  int fusion_layer = 2;     // first fused layer, 0-based; == layers disables fusion
  int bottleneck_len = 8;   // F_b
  int heads = 4;
  int ffn_dim = 256;
  int conv_kernel = 7;
  FusionStrategy strategy = FusionStrategy::sequential;
  int vocab_size = 12;      // tokens 1..V; CTC blank = 0
  int decoder_layers = 2;
  double w_ctc = 0.3;
  std::uint64_t seed = 1;

  int audio_feat_dim = 20;  // front-end input widths
  int video_feat_dim = 12;
  double bottleneck_init_std = 0.02;
  double dropout = 0.0;     // applied to front-end projections when a dropout rng is supplied

  void validate() const;

  // decoder token ids: 0 = eos, 1..V = tokens, V+1 = sos (input only)
  int sos_id() const { return vocab_size + 1; }
  static constexpr int eos_id = 0;
  int decoder_classes() const { return vocab_size + 1; }  // eos + tokens
};

/// Learnable bottleneck embeddings, Gaussian at init and shared across the
/// batch (a single tensor, never per-sample).
Tensor init_bottleneck(int bottleneck_len, int dim, double sigma, std::uint64_t seed);

/// Ordered, named parameter registry. Construction order fixes checkpoint
/// layout and init determinism.
class ParamStore {
 public:
  Tensor gaussian(const std::string& name, Shape shape, double stddev, Rng& rng);
  Tensor constant(const std::string& name, Shape shape, double value);
  Tensor adopt(const std::string& name, Tensor t);

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  Tensor find(const std::string& name) const;  // UsageError if absent
  std::vector<Tensor> tensors() const;
  std::int64_t total_size() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// One encoder sub-step for rollout: the head-averaged attention over the
/// tokens listed in `token_ids` (global index space, matrix row/col order).
struct TraceStep {
  int sub_step = 0;
  std::vector<int> token_ids;
  Tensor attn;  // [P x P], rows sum to 1
};

struct AttentionTrace {
  int n_audio = 0;
  int n_video = 0;
  int n_bottleneck = 0;
  std::vector<TraceStep> steps;

  int total_tokens() const { return n_audio + n_video + n_bottleneck; }
  std::vector<int> audio_ids() const;
  std::vector<int> video_ids() const;
};

struct MultiHeadAttention {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  int heads = 1;

  /// Returns projected output and the head-averaged weight matrix.
  std::pair<Tensor, Tensor> forward(const Tensor& queries, const Tensor& keys_values,
                                    const std::vector<std::uint8_t>* mask = nullptr) const;
};

/// Macaron Conformer block: 1/2 FFN -> MHSA -> conv module -> 1/2 FFN, each
/// residual, then a final layer norm.
struct ConformerBlock {
  Tensor ffn1_ln_g, ffn1_ln_b, ffn1_w1, ffn1_b1, ffn1_w2, ffn1_b2;
  Tensor attn_ln_g, attn_ln_b;
  MultiHeadAttention attn;
  Tensor conv_ln_g, conv_ln_b, conv_w_in, conv_b_in, conv_kernel, conv_w_out, conv_b_out;
  Tensor ffn2_ln_g, ffn2_ln_b, ffn2_w1, ffn2_b1, ffn2_w2, ffn2_b2;
  Tensor final_ln_g, final_ln_b;

  std::pair<Tensor, Tensor> forward(const Tensor& x) const;  // (y, avg attention)
};

struct DecoderLayer {
  Tensor self_ln_g, self_ln_b;
  MultiHeadAttention self_attn;
  Tensor cross_ln_g, cross_ln_b;
  MultiHeadAttention cross_attn;
  Tensor ffn_ln_g, ffn_ln_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2;

  Tensor forward(const Tensor& y, const Tensor& memory) const;
};

MultiHeadAttention build_attention(ParamStore& ps, const std::string& prefix, int dim, int heads,
                                   Rng& rng);
ConformerBlock build_conformer_block(ParamStore& ps, const std::string& prefix,
                                     const ModelConfig& cfg, Rng& rng);
DecoderLayer build_decoder_layer(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg,
                                 Rng& rng);

struct FusionResult {
  Tensor bottleneck;
  Tensor video_frames;  // undefined for audio-only paths
  Tensor audio_frames;
};

/// Sequential update order: the video block consumes [x_b || x_v], its updated
/// bottleneck feeds the audio block over [x_b_hat || x_a]. When
/// `ablate_bottleneck` is set the audio block sees the pre-video bottleneck,
/// severing the video -> audio path.
FusionResult fuse_sequential(const Tensor& bottleneck, const Tensor& video, const Tensor& audio,
                             const ConformerBlock& video_block, const ConformerBlock& audio_block,
                             AttentionTrace* trace, bool ablate_bottleneck = false);

struct MeanFusionResult {
  Tensor bottleneck;            // mean of per-modality bottleneck updates
  std::vector<Tensor> streams;  // updated frames per modality, input order
  std::vector<Tensor> attn;     // head-averaged attention per modality block
};

/// Mean update over any N(m) >= 1 modalities: each block runs on
/// [x_b || x_m] independently; the new bottleneck is the mean of the
/// per-modality updates (with one modality it degenerates to that stream's
/// update unchanged).
MeanFusionResult fuse_mean_multi(const Tensor& bottleneck, const std::vector<Tensor>& streams,
                                 const std::vector<const ConformerBlock*>& blocks,
                                 bool ablate_to_last = false);

/// Two-stream wrapper used by the encoder; video runs first for trace order.
FusionResult fuse_mean(const Tensor& bottleneck, const Tensor& video, const Tensor& audio,
                       const ConformerBlock& video_block, const ConformerBlock& audio_block,
                       AttentionTrace* trace, bool ablate_bottleneck = false);

struct EncoderOutput {
  Tensor audio;  // [F_a x D]
  Tensor video;  // [F_v x D], undefined for audio-only models
  AttentionTrace trace;
};

enum class Variant { bottleneck, audio_only };

std::string to_string(Variant v);
Variant variant_from(const std::string& s);

struct EncodeOptions {
  bool collect_trace = true;
  bool ablate_bottleneck = false;
  Rng* dropout_rng = nullptr;  // non-null enables dropout at cfg.dropout
};

class Model {
 public:
  Model(const ModelConfig& cfg, Variant variant = Variant::bottleneck);

  const ModelConfig& config() const { return cfg_; }
  Variant variant() const { return variant_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Dual-stream encode. Inputs are raw features: audio [F_a x audio_feat_dim],
  /// video [F_v x video_feat_dim] (ignored for audio-only models).
  EncoderOutput encode(const Tensor& audio_feats, const Tensor& video_feats,
                       const EncodeOptions& opts = {}) const;

  /// Next-token logits per prefix position; prefix must start with sos.
  /// Cross-attention keys/values are the encoded audio stream only.
  Tensor decoder_logits(const std::vector<int>& prefix, const Tensor& audio_memory) const;

  Tensor ctc_log_probs_audio(const Tensor& audio_encoded) const;  // [F_a x (V+1)]
  Tensor ctc_log_probs_video(const Tensor& video_encoded) const;

 private:
  Tensor front_end(const Tensor& feats, const Tensor& w, const Tensor& b, bool add_positions,
                   const EncodeOptions& opts) const;

  ModelConfig cfg_;
  Variant variant_;
  ParamStore params_;

  Tensor front_a_w_, front_a_b_, front_v_w_, front_v_b_;
  Tensor bottleneck_;
  std::vector<ConformerBlock> enc_audio_, enc_video_;
  Tensor embed_;
  std::vector<DecoderLayer> dec_layers_;
  Tensor dec_final_ln_g_, dec_final_ln_b_, dec_out_w_, dec_out_b_;
  Tensor ctc_a_w_, ctc_a_b_, ctc_v_w_, ctc_v_b_;
};

}  // namespace cobra
