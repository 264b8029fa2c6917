// SPDX-License-Identifier: Apache-2.0
#include "cobra/model.hpp"

#include <cmath>
#include <numeric>

namespace cobra {

namespace {

// Head-average of per-head weight matrices, detached from the tape.
Tensor average_heads(const std::vector<Tensor>& weights) {
  Tensor avg = Tensor::zeros(weights[0].shape);
  for (const Tensor& w : weights)
    for (std::size_t i = 0; i < avg.data->size(); ++i) (*avg.data)[i] += (*w.data)[i];
  const double inv = 1.0 / static_cast<double>(weights.size());
  for (double& v : *avg.data) v *= inv;
  return avg;
}

void push_trace(AttentionTrace* trace, std::vector<int> ids, Tensor attn) {
  if (trace == nullptr) return;
  TraceStep step;
  step.sub_step = static_cast<int>(trace->steps.size());
  step.token_ids = std::move(ids);
  step.attn = std::move(attn);
  trace->steps.push_back(std::move(step));
}

std::vector<int> index_range(int begin, int count) {
  std::vector<int> ids(count);
  std::iota(ids.begin(), ids.end(), begin);
  return ids;
}

std::vector<int> cat_ids(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<int> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

std::string to_string(FusionStrategy s) {
  return s == FusionStrategy::sequential ? "sequential" : "mean";
}

FusionStrategy fusion_strategy_from(const std::string& s) {
  if (s == "sequential") return FusionStrategy::sequential;
  if (s == "mean") return FusionStrategy::mean;
  throw ConfigError("unknown fusion strategy '" + s + "' (expected sequential|mean)");
}

std::string to_string(Variant v) { return v == Variant::bottleneck ? "bottleneck" : "audio_only"; }

Variant variant_from(const std::string& s) {
  if (s == "bottleneck") return Variant::bottleneck;
  if (s == "audio_only") return Variant::audio_only;
  throw ConfigError("unknown variant '" + s + "' (expected bottleneck|audio_only)");
}

void ModelConfig::validate() const {
  if (dim <= 0 || layers <= 0 || ffn_dim <= 0 || vocab_size <= 0 || decoder_layers <= 0) {
    throw ConfigError("model config: dim/layers/ffn_dim/vocab_size/decoder_layers must be >= 1");
  }
  if (fusion_layer < 0 || fusion_layer > layers) {
    throw ConfigError("model config: fusion_layer must be in [0, layers], got " +
                      std::to_string(fusion_layer));
  }
  if (bottleneck_len < 1) {
    throw ConfigError("model config: bottleneck_len must be >= 1");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) {
    throw ConfigError("model config: conv_kernel must be odd, got " + std::to_string(conv_kernel));
  }
  if (heads < 1 || dim % heads != 0) {
    throw ConfigError("model config: dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (w_ctc < 0.0 || w_ctc > 1.0) {
    throw ConfigError("model config: w_ctc must be in [0,1]");
  }
  if (audio_feat_dim < 1 || video_feat_dim < 1) {
    throw ConfigError("model config: feature dims must be >= 1");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("model config: dropout must be in [0,1)");
  }
  if (bottleneck_init_std <= 0.0) {
    throw ConfigError("model config: bottleneck_init_std must be > 0");
  }
}

Tensor init_bottleneck(int bottleneck_len, int dim, double sigma, std::uint64_t seed) {
  if (bottleneck_len < 1) throw ConfigError("init_bottleneck: need at least one token");
  if (sigma <= 0.0) throw ConfigError("init_bottleneck: sigma must be > 0");
  Rng rng(stream_seed(seed, {fnv1a64("bottleneck")}));
  return Tensor::gaussian({bottleneck_len, dim}, sigma, rng, /*requires_grad=*/true);
}

Tensor ParamStore::gaussian(const std::string& name, Shape shape, double stddev, Rng& rng) {
  return adopt(name, Tensor::gaussian(std::move(shape), stddev, rng, /*requires_grad=*/true));
}

Tensor ParamStore::constant(const std::string& name, Shape shape, double value) {
  Tensor t = Tensor::full(std::move(shape), value);
  t.requires_grad = true;
  t.ensure_grad();
  return adopt(name, std::move(t));
}

Tensor ParamStore::adopt(const std::string& name, Tensor t) {
  for (const auto& [n, unused] : entries_) {
    if (n == name) throw UsageError("ParamStore: duplicate parameter name '" + name + "'");
  }
  t.requires_grad = true;
  t.ensure_grad();
  entries_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::find(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw UsageError("ParamStore: no parameter named '" + name + "'");
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  out.reserve(entries_.size());
  for (const auto& [n, t] : entries_) out.push_back(t);
  return out;
}

std::int64_t ParamStore::total_size() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

std::vector<int> AttentionTrace::audio_ids() const { return index_range(0, n_audio); }
std::vector<int> AttentionTrace::video_ids() const { return index_range(n_audio, n_video); }

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

std::pair<Tensor, Tensor> MultiHeadAttention::forward(
    const Tensor& queries, const Tensor& keys_values,
    const std::vector<std::uint8_t>* mask) const {
  const int dim = wq.cols();
  const int head_dim = dim / heads;
  Tensor q = add_rowwise(matmul(queries, wq), bq);
  Tensor k = add_rowwise(matmul(keys_values, wk), bk);
  Tensor v = add_rowwise(matmul(keys_values, wv), bv);
  std::vector<Tensor> head_outs, head_weights;
  head_outs.reserve(heads);
  head_weights.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * head_dim, (h + 1) * head_dim);
    Tensor kh = slice_cols(k, h * head_dim, (h + 1) * head_dim);
    Tensor vh = slice_cols(v, h * head_dim, (h + 1) * head_dim);
    AttentionResult r = scaled_dot_attention(qh, kh, vh, mask);
    head_outs.push_back(r.out);
    head_weights.push_back(r.weights);
  }
  Tensor merged = concat_cols(head_outs);
  Tensor out = add_rowwise(matmul(merged, wo), bo);
  return {out, average_heads(head_weights)};
}

namespace {

Tensor half_ffn(const Tensor& x, const Tensor& ln_g, const Tensor& ln_b, const Tensor& w1,
                const Tensor& b1, const Tensor& w2, const Tensor& b2) {
  Tensor h = layer_norm(x, ln_g, ln_b);
  h = swish(add_rowwise(matmul(h, w1), b1));
  h = add_rowwise(matmul(h, w2), b2);
  return scale(h, 0.5);
}

}  // namespace

std::pair<Tensor, Tensor> ConformerBlock::forward(const Tensor& x) const {
  Tensor h = add(x, half_ffn(x, ffn1_ln_g, ffn1_ln_b, ffn1_w1, ffn1_b1, ffn1_w2, ffn1_b2));

  Tensor attn_in = layer_norm(h, attn_ln_g, attn_ln_b);
  auto [attn_out, attn_avg] = attn.forward(attn_in, attn_in);
  h = add(h, attn_out);

  {
    const int dim = x.cols();
    Tensor c = layer_norm(h, conv_ln_g, conv_ln_b);
    c = add_rowwise(matmul(c, conv_w_in), conv_b_in);  // [T x 2D]
    Tensor gate_a = slice_cols(c, 0, dim);
    Tensor gate_b = slice_cols(c, dim, 2 * dim);
    c = mul(gate_a, sigmoid(gate_b));  // GLU
    c = depthwise_conv1d(c, conv_kernel);
    c = swish(c);
    c = add_rowwise(matmul(c, conv_w_out), conv_b_out);
    h = add(h, c);
  }

  h = add(h, half_ffn(h, ffn2_ln_g, ffn2_ln_b, ffn2_w1, ffn2_b1, ffn2_w2, ffn2_b2));
  Tensor y = layer_norm(h, final_ln_g, final_ln_b);
  return {y, attn_avg};
}

Tensor DecoderLayer::forward(const Tensor& y, const Tensor& memory) const {
  const int T = y.rows();
  std::vector<std::uint8_t> causal(static_cast<std::size_t>(T) * T, 0);
  for (int r = 0; r < T; ++r)
    for (int c = 0; c <= r; ++c) causal[static_cast<std::size_t>(r) * T + c] = 1;

  Tensor h = y;
  {
    Tensor q = layer_norm(h, self_ln_g, self_ln_b);
    auto [out, w] = self_attn.forward(q, q, &causal);
    h = add(h, out);
  }
  {
    Tensor q = layer_norm(h, cross_ln_g, cross_ln_b);
    auto [out, w] = cross_attn.forward(q, memory);
    h = add(h, out);
  }
  {
    Tensor f = layer_norm(h, ffn_ln_g, ffn_ln_b);
    f = swish(add_rowwise(matmul(f, ffn_w1), ffn_b1));
    f = add_rowwise(matmul(f, ffn_w2), ffn_b2);
    h = add(h, f);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

FusionResult fuse_sequential(const Tensor& bottleneck, const Tensor& video, const Tensor& audio,
                             const ConformerBlock& video_block, const ConformerBlock& audio_block,
                             AttentionTrace* trace, bool ablate_bottleneck) {
  const int fb = bottleneck.rows();
  const int fa = audio.rows(), fv = video.rows();

  auto [video_out, video_attn] = video_block.forward(concat_rows(bottleneck, video));
  auto [bneck_hat, video_next] = split_rows(video_out, fb);
  if (trace != nullptr) {
    push_trace(trace, cat_ids(index_range(fa + fv, fb), index_range(fa, fv)), video_attn);
  }

  const Tensor& audio_side_bneck = ablate_bottleneck ? bottleneck : bneck_hat;
  auto [audio_out, audio_attn] = audio_block.forward(concat_rows(audio_side_bneck, audio));
  auto [bneck_next, audio_next] = split_rows(audio_out, fb);
  if (trace != nullptr) {
    push_trace(trace, cat_ids(index_range(fa + fv, fb), index_range(0, fa)), audio_attn);
  }

  return {bneck_next, video_next, audio_next};
}

MeanFusionResult fuse_mean_multi(const Tensor& bottleneck, const std::vector<Tensor>& streams,
                                 const std::vector<const ConformerBlock*>& blocks,
                                 bool ablate_to_last) {
  if (streams.empty() || streams.size() != blocks.size()) {
    throw UsageError("fuse_mean_multi: need one block per modality, at least one modality");
  }
  const int fb = bottleneck.rows();
  MeanFusionResult r;
  std::vector<Tensor> bneck_updates;
  bneck_updates.reserve(streams.size());
  for (std::size_t m = 0; m < streams.size(); ++m) {
    auto [out, attn] = blocks[m]->forward(concat_rows(bottleneck, streams[m]));
    auto [bneck_m, frames_m] = split_rows(out, fb);
    bneck_updates.push_back(bneck_m);
    r.streams.push_back(frames_m);
    r.attn.push_back(attn);
  }
  r.bottleneck = ablate_to_last ? bneck_updates.back() : mean_tensors(bneck_updates);
  return r;
}

FusionResult fuse_mean(const Tensor& bottleneck, const Tensor& video, const Tensor& audio,
                       const ConformerBlock& video_block, const ConformerBlock& audio_block,
                       AttentionTrace* trace, bool ablate_bottleneck) {
  const int fb = bottleneck.rows();
  const int fa = audio.rows(), fv = video.rows();
  // audio last so the ablated bottleneck path carries no video content
  MeanFusionResult r = fuse_mean_multi(bottleneck, {video, audio}, {&video_block, &audio_block},
                                       ablate_bottleneck);
  if (trace != nullptr) {
    push_trace(trace, cat_ids(index_range(fa + fv, fb), index_range(fa, fv)), r.attn[0]);
    push_trace(trace, cat_ids(index_range(fa + fv, fb), index_range(0, fa)), r.attn[1]);
  }
  return {r.bottleneck, r.streams[0], r.streams[1]};
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

MultiHeadAttention build_attention(ParamStore& ps, const std::string& prefix, int dim, int heads,
                                   Rng& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(dim));
  MultiHeadAttention m;
  m.heads = heads;
  m.wq = ps.gaussian(prefix + ".wq", {dim, dim}, std, rng);
  m.bq = ps.constant(prefix + ".bq", {dim}, 0.0);
  m.wk = ps.gaussian(prefix + ".wk", {dim, dim}, std, rng);
  m.bk = ps.constant(prefix + ".bk", {dim}, 0.0);
  m.wv = ps.gaussian(prefix + ".wv", {dim, dim}, std, rng);
  m.bv = ps.constant(prefix + ".bv", {dim}, 0.0);
  m.wo = ps.gaussian(prefix + ".wo", {dim, dim}, std, rng);
  m.bo = ps.constant(prefix + ".bo", {dim}, 0.0);
  return m;
}

ConformerBlock build_conformer_block(ParamStore& ps, const std::string& prefix,
                                     const ModelConfig& cfg, Rng& rng) {
  const int d = cfg.dim, f = cfg.ffn_dim, k = cfg.conv_kernel;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(f));
  ConformerBlock b;
  b.ffn1_ln_g = ps.constant(prefix + ".ffn1.ln_g", {d}, 1.0);
  b.ffn1_ln_b = ps.constant(prefix + ".ffn1.ln_b", {d}, 0.0);
  b.ffn1_w1 = ps.gaussian(prefix + ".ffn1.w1", {d, f}, sd, rng);
  b.ffn1_b1 = ps.constant(prefix + ".ffn1.b1", {f}, 0.0);
  b.ffn1_w2 = ps.gaussian(prefix + ".ffn1.w2", {f, d}, sf, rng);
  b.ffn1_b2 = ps.constant(prefix + ".ffn1.b2", {d}, 0.0);
  b.attn_ln_g = ps.constant(prefix + ".attn.ln_g", {d}, 1.0);
  b.attn_ln_b = ps.constant(prefix + ".attn.ln_b", {d}, 0.0);
  b.attn = build_attention(ps, prefix + ".attn", d, cfg.heads, rng);
  b.conv_ln_g = ps.constant(prefix + ".conv.ln_g", {d}, 1.0);
  b.conv_ln_b = ps.constant(prefix + ".conv.ln_b", {d}, 0.0);
  b.conv_w_in = ps.gaussian(prefix + ".conv.w_in", {d, 2 * d}, sd, rng);
  b.conv_b_in = ps.constant(prefix + ".conv.b_in", {2 * d}, 0.0);
  b.conv_kernel = ps.gaussian(prefix + ".conv.kernel", {k, d},
                              1.0 / std::sqrt(static_cast<double>(k)), rng);
  b.conv_w_out = ps.gaussian(prefix + ".conv.w_out", {d, d}, sd, rng);
  b.conv_b_out = ps.constant(prefix + ".conv.b_out", {d}, 0.0);
  b.ffn2_ln_g = ps.constant(prefix + ".ffn2.ln_g", {d}, 1.0);
  b.ffn2_ln_b = ps.constant(prefix + ".ffn2.ln_b", {d}, 0.0);
  b.ffn2_w1 = ps.gaussian(prefix + ".ffn2.w1", {d, f}, sd, rng);
  b.ffn2_b1 = ps.constant(prefix + ".ffn2.b1", {f}, 0.0);
  b.ffn2_w2 = ps.gaussian(prefix + ".ffn2.w2", {f, d}, sf, rng);
  b.ffn2_b2 = ps.constant(prefix + ".ffn2.b2", {d}, 0.0);
  b.final_ln_g = ps.constant(prefix + ".final.ln_g", {d}, 1.0);
  b.final_ln_b = ps.constant(prefix + ".final.ln_b", {d}, 0.0);
  return b;
}

DecoderLayer build_decoder_layer(ParamStore& ps, const std::string& prefix, const ModelConfig& cfg,
                                 Rng& rng) {
  const int d = cfg.dim, f = cfg.ffn_dim;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(f));
  DecoderLayer l;
  l.self_ln_g = ps.constant(prefix + ".self.ln_g", {d}, 1.0);
  l.self_ln_b = ps.constant(prefix + ".self.ln_b", {d}, 0.0);
  l.self_attn = build_attention(ps, prefix + ".self", d, cfg.heads, rng);
  l.cross_ln_g = ps.constant(prefix + ".cross.ln_g", {d}, 1.0);
  l.cross_ln_b = ps.constant(prefix + ".cross.ln_b", {d}, 0.0);
  l.cross_attn = build_attention(ps, prefix + ".cross", d, cfg.heads, rng);
  l.ffn_ln_g = ps.constant(prefix + ".ffn.ln_g", {d}, 1.0);
  l.ffn_ln_b = ps.constant(prefix + ".ffn.ln_b", {d}, 0.0);
  l.ffn_w1 = ps.gaussian(prefix + ".ffn.w1", {d, f}, sd, rng);
  l.ffn_b1 = ps.constant(prefix + ".ffn.b1", {f}, 0.0);
  l.ffn_w2 = ps.gaussian(prefix + ".ffn.w2", {f, d}, sf, rng);
  l.ffn_b2 = ps.constant(prefix + ".ffn.b2", {d}, 0.0);
  return l;
}

Model::Model(const ModelConfig& cfg, Variant variant) : cfg_(cfg), variant_(variant) {
  cfg_.validate();
  Rng rng(stream_seed(cfg_.seed, {fnv1a64("model-init")}));
  const int d = cfg_.dim;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));

  front_a_w_ = params_.gaussian("front.audio.w", {cfg_.audio_feat_dim, d},
                                1.0 / std::sqrt(static_cast<double>(cfg_.audio_feat_dim)), rng);
  front_a_b_ = params_.constant("front.audio.b", {d}, 0.0);
  if (variant_ == Variant::bottleneck) {
    front_v_w_ = params_.gaussian("front.video.w", {cfg_.video_feat_dim, d},
                                  1.0 / std::sqrt(static_cast<double>(cfg_.video_feat_dim)), rng);
    front_v_b_ = params_.constant("front.video.b", {d}, 0.0);
    bottleneck_ = params_.adopt(
        "bottleneck", init_bottleneck(cfg_.bottleneck_len, d, cfg_.bottleneck_init_std, cfg_.seed));
  }
  for (int l = 0; l < cfg_.layers; ++l) {
    enc_audio_.push_back(build_conformer_block(params_, "enc.audio.l" + std::to_string(l), cfg_, rng));
  }
  if (variant_ == Variant::bottleneck) {
    for (int l = 0; l < cfg_.layers; ++l) {
      enc_video_.push_back(build_conformer_block(params_, "enc.video.l" + std::to_string(l), cfg_, rng));
    }
  }
  embed_ = params_.gaussian("dec.embed", {cfg_.vocab_size + 2, d}, 0.02, rng);
  for (int l = 0; l < cfg_.decoder_layers; ++l) {
    dec_layers_.push_back(build_decoder_layer(params_, "dec.l" + std::to_string(l), cfg_, rng));
  }
  dec_final_ln_g_ = params_.constant("dec.final.ln_g", {d}, 1.0);
  dec_final_ln_b_ = params_.constant("dec.final.ln_b", {d}, 0.0);
  dec_out_w_ = params_.gaussian("dec.out.w", {d, cfg_.decoder_classes()}, sd, rng);
  dec_out_b_ = params_.constant("dec.out.b", {cfg_.decoder_classes()}, 0.0);
  ctc_a_w_ = params_.gaussian("ctc.audio.w", {d, cfg_.vocab_size + 1}, sd, rng);
  ctc_a_b_ = params_.constant("ctc.audio.b", {cfg_.vocab_size + 1}, 0.0);
  if (variant_ == Variant::bottleneck) {
    ctc_v_w_ = params_.gaussian("ctc.video.w", {d, cfg_.vocab_size + 1}, sd, rng);
    ctc_v_b_ = params_.constant("ctc.video.b", {cfg_.vocab_size + 1}, 0.0);
  }
}

Tensor Model::front_end(const Tensor& feats, const Tensor& w, const Tensor& b, bool add_positions,
                        const EncodeOptions& opts) const {
  Tensor x = add_rowwise(matmul(feats, w), b);
  if (add_positions) x = add(x, sinusoidal_positions(x.rows(), x.cols()));
  if (opts.dropout_rng != nullptr && cfg_.dropout > 0.0) {
    x = dropout(x, cfg_.dropout, *opts.dropout_rng);
  }
  return x;
}

EncoderOutput Model::encode(const Tensor& audio_feats, const Tensor& video_feats,
                            const EncodeOptions& opts) const {
  if (audio_feats.cols() != cfg_.audio_feat_dim) {
    throw ShapeError("encode: audio features " + shape_str(audio_feats.shape) + " expected width " +
                     std::to_string(cfg_.audio_feat_dim));
  }
  EncoderOutput out;
  AttentionTrace* trace = opts.collect_trace ? &out.trace : nullptr;

  Tensor audio = front_end(audio_feats, front_a_w_, front_a_b_, true, opts);
  const int fa = audio.rows();

  if (variant_ == Variant::audio_only) {
    out.trace.n_audio = fa;
    for (int l = 0; l < cfg_.layers; ++l) {
      auto [y, attn] = enc_audio_[l].forward(audio);
      audio = y;
      push_trace(trace, index_range(0, fa), attn);
    }
    out.audio = audio;
    return out;
  }

  if (video_feats.cols() != cfg_.video_feat_dim) {
    throw ShapeError("encode: video features " + shape_str(video_feats.shape) + " expected width " +
                     std::to_string(cfg_.video_feat_dim));
  }
  Tensor video = front_end(video_feats, front_v_w_, front_v_b_, true, opts);
  const int fv = video.rows();
  out.trace.n_audio = fa;
  out.trace.n_video = fv;
  out.trace.n_bottleneck = cfg_.bottleneck_len;

  Tensor bneck = bottleneck_;
  for (int l = 0; l < cfg_.layers; ++l) {
    if (l < cfg_.fusion_layer) {
      // independent per-modality encoding, still two sub-steps (video first)
      auto [vy, vattn] = enc_video_[l].forward(video);
      video = vy;
      push_trace(trace, index_range(fa, fv), vattn);
      auto [ay, aattn] = enc_audio_[l].forward(audio);
      audio = ay;
      push_trace(trace, index_range(0, fa), aattn);
    } else {
      FusionResult r =
          cfg_.strategy == FusionStrategy::sequential
              ? fuse_sequential(bneck, video, audio, enc_video_[l], enc_audio_[l], trace,
                                opts.ablate_bottleneck)
              : fuse_mean(bneck, video, audio, enc_video_[l], enc_audio_[l], trace,
                          opts.ablate_bottleneck);
      bneck = r.bottleneck;
      video = r.video_frames;
      audio = r.audio_frames;
    }
  }
  out.audio = audio;
  out.video = video;
  return out;
}

Tensor Model::decoder_logits(const std::vector<int>& prefix, const Tensor& audio_memory) const {
  if (prefix.empty()) {
    throw UsageError("decoder_logits: empty prefix (must start with sos)");
  }
  if (prefix.front() != cfg_.sos_id()) {
    throw UsageError("decoder_logits: prefix must start with the sos token id " +
                     std::to_string(cfg_.sos_id()));
  }
  Tensor y = embedding_lookup(embed_, prefix);
  y = add(y, sinusoidal_positions(y.rows(), y.cols()));
  for (const DecoderLayer& layer : dec_layers_) y = layer.forward(y, audio_memory);
  y = layer_norm(y, dec_final_ln_g_, dec_final_ln_b_);
  return add_rowwise(matmul(y, dec_out_w_), dec_out_b_);
}

Tensor Model::ctc_log_probs_audio(const Tensor& audio_encoded) const {
  return log_softmax_rows(add_rowwise(matmul(audio_encoded, ctc_a_w_), ctc_a_b_));
}

Tensor Model::ctc_log_probs_video(const Tensor& video_encoded) const {
  if (variant_ != Variant::bottleneck) {
    throw UsageError("ctc_log_probs_video: audio-only model has no video head");
  }
  return log_softmax_rows(add_rowwise(matmul(video_encoded, ctc_v_w_), ctc_v_b_));
}

}  // namespace cobra
