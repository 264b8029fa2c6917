// SPDX-License-Identifier: Apache-2.0
#include "cobra/train.hpp"

#include "cobra/optim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

namespace cobra {

namespace {

std::uint64_t snr_bits(double snr_db) { return std::bit_cast<std::uint64_t>(snr_db); }

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("write failed: " + path);
}

// In-place Fisher-Yates on indices; std::shuffle is stdlib-specific.
std::vector<int> shuffled_indices(int n, Rng& rng) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

}  // namespace

LossParts utterance_loss(const Model& model, const Tensor& audio_feats, const Tensor& video_feats,
                         const std::vector<int>& transcript, double label_smoothing,
                         Rng* dropout_rng) {
  EncodeOptions opts;
  opts.collect_trace = false;
  opts.dropout_rng = dropout_rng;
  EncoderOutput enc = model.encode(audio_feats, video_feats, opts);

  Tensor audio_logp = model.ctc_log_probs_audio(enc.audio);
  Tensor video_logp;  // undefined for the audio-only variant
  if (model.variant() == Variant::bottleneck) {
    video_logp = model.ctc_log_probs_video(enc.video);
  }
  std::vector<int> prefix;
  prefix.reserve(transcript.size() + 1);
  prefix.push_back(model.config().sos_id());
  prefix.insert(prefix.end(), transcript.begin(), transcript.end());
  Tensor logits = model.decoder_logits(prefix, enc.audio);

  LossParts parts;
  parts.total =
      hybrid_loss(audio_logp, video_logp, logits, transcript, model.config(), label_smoothing);
  // component NLLs for the log, recomputed outside the graph
  {
    Tensor a = ctc_nll(audio_logp.clone_values(), transcript);
    parts.ctc_audio = a.item();
    if (video_logp.defined()) {
      parts.ctc_video = ctc_nll(video_logp.clone_values(), transcript).item();
    }
    std::vector<int> shifted = transcript;
    shifted.push_back(ModelConfig::eos_id);
    parts.ce = cross_entropy(logits.clone_values(), shifted, label_smoothing).item();
  }
  return parts;
}

std::vector<int> decode_utterance(const Model& model, const Tensor& audio_feats,
                                  const Tensor& video_feats, const BeamOptions& opts) {
  EncodeOptions eopts;
  eopts.collect_trace = false;
  EncoderOutput enc = model.encode(audio_feats, video_feats, eopts);
  Tensor ctc_logp = model.ctc_log_probs_audio(enc.audio);
  return beam_search(model, enc.audio, ctc_logp, opts).tokens;
}

std::string condition_label(const EvalCondition& c) {
  if (!c.has_value()) return "clean";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%g", to_string(c->kind).c_str(), c->snr_db);
  return buf;
}

Tensor corrupt_audio(const Utterance& u, const EvalCondition& c, const TaskTemplates& templates,
                     std::uint64_t seed) {
  if (!c.has_value()) return u.audio;
  Rng rng(stream_seed(seed, {fnv1a64("eval-noise"), static_cast<std::uint64_t>(c->kind),
                             snr_bits(c->snr_db), fnv1a64(u.id)}));
  Tensor noise =
      synth_noise(c->kind, u.audio.rows(), u.audio.cols(), rng, templates);
  return mix_at_snr(u.audio, noise, c->snr_db);
}

double evaluate_condition(const Model& model, const std::vector<Utterance>& utts,
                          const EvalCondition& c, const TaskTemplates& templates,
                          const BeamOptions& opts, std::uint64_t seed) {
  std::int64_t edits = 0, ref_tokens = 0;
  for (const Utterance& u : utts) {
    Tensor audio = corrupt_audio(u, c, templates, seed);
    std::vector<int> hyp = decode_utterance(model, audio, u.video, opts);
    edits += edit_distance(hyp, u.transcript);
    ref_tokens += static_cast<std::int64_t>(u.transcript.size());
  }
  return ref_tokens > 0 ? static_cast<double>(edits) / static_cast<double>(ref_tokens) : 0.0;
}

TrainResult train_model(const RunConfig& rc, Variant variant) {
  const std::string train_path = rc.train_dataset_path();
  if (!std::filesystem::exists(train_path)) {
    throw IoError("train: dataset not found: " + train_path + " (run gen first)");
  }
  Dataset train = load_dataset(train_path);
  Dataset eval_set = load_dataset(rc.eval_dataset_path());
  if (train.spec.vocab_size != rc.vocab_size ||
      train.spec.audio_feat_dim != rc.audio_feat_dim ||
      train.spec.video_feat_dim != rc.video_feat_dim) {
    throw CheckpointMismatchError("train: dataset spec does not match config (vocab/feature dims)");
  }
  TaskTemplates templates(train.spec);
  const NoiseKind train_kind = noise_kind_from(rc.train_noise);

  Model model(rc.model_config(), variant);
  AdamW::Options aopts;
  aopts.weight_decay = rc.weight_decay;
  AdamW optimizer(model.params().tensors(), aopts);

  const int n = static_cast<int>(train.utterances.size());
  CosineSchedule schedule;
  schedule.peak_lr = rc.lr_peak;
  schedule.warmup_steps = rc.warmup_epochs * n;
  schedule.total_steps = static_cast<double>(rc.epochs) * n;

  BeamOptions bopts = rc.beam_options();
  TrainResult result;
  result.checkpoint_path = rc.checkpoint_path(variant);
  result.log_path = rc.train_log_path(variant);
  result.best_epoch = -1;
  result.best_wer = std::numeric_limits<double>::infinity();

  std::string log_text = "epoch,lr,loss,ctc_audio,ctc_video,ce,eval_wer\n";
  std::int64_t step = 0;
  for (int epoch = 0; epoch < rc.epochs; ++epoch) {
    Rng order_rng(stream_seed(rc.seed, {fnv1a64("order"), static_cast<std::uint64_t>(epoch)}));
    std::vector<int> order = shuffled_indices(n, order_rng);
    if (epoch < rc.curriculum_epochs) {
      // short-utterance warm phase, the scaled-down two-stage analogue
      std::vector<int> kept;
      for (int i : order) {
        if (static_cast<int>(train.utterances[i].transcript.size()) <= rc.curriculum_max_len) {
          kept.push_back(i);
        }
      }
      if (!kept.empty()) order = std::move(kept);
    }

    double sum_loss = 0.0, sum_a = 0.0, sum_v = 0.0, sum_ce = 0.0, last_lr = 0.0;
    for (int i : order) {
      const Utterance& u = train.utterances[i];
      Rng noise_rng(stream_seed(rc.seed, {fnv1a64("train-noise"),
                                          static_cast<std::uint64_t>(epoch),
                                          static_cast<std::uint64_t>(i)}));
      Tensor audio = u.audio;
      const double snr = noise_rng.uniform(rc.train_snr_min, rc.train_snr_max);
      Tensor noise = synth_noise(train_kind, audio.rows(), audio.cols(), noise_rng, templates);
      audio = mix_at_snr(audio, noise, snr);
      if (rc.time_mask_spans > 0 && rc.time_mask_max_span > 0 &&
          rc.time_mask_max_span < audio.rows()) {
        audio = time_mask(audio, rc.time_mask_max_span, rc.time_mask_spans, noise_rng);
      }

      Tape tape;
      LossParts parts;
      {
        TapeScope scope(tape);
        Rng dropout_rng = noise_rng.fork(fnv1a64("dropout"));
        parts = utterance_loss(model, audio, u.video, u.transcript, rc.label_smoothing,
                               rc.dropout > 0.0 ? &dropout_rng : nullptr);
        backward(parts.total, tape);
      }
      const double loss_value = parts.total.item();
      if (!std::isfinite(loss_value)) {
        throw DataError("train: non-finite loss at epoch " + std::to_string(epoch) +
                        ", utterance " + u.id);
      }
      if (rc.grad_clip > 0.0) clip_grad_norm(model.params().tensors(), rc.grad_clip);
      last_lr = schedule.at(static_cast<double>(step));
      optimizer.step(last_lr);
      ++step;

      sum_loss += loss_value;
      sum_a += parts.ctc_audio;
      sum_v += parts.ctc_video;
      sum_ce += parts.ce;
    }
    const double inv = 1.0 / static_cast<double>(order.size());

    const double eval_wer = evaluate_condition(model, eval_set.utterances, std::nullopt, templates,
                                               bopts, rc.seed);
    EpochLog log{epoch,          last_lr,      sum_loss * inv, sum_a * inv,
                 sum_v * inv,    sum_ce * inv, eval_wer};
    result.logs.push_back(log);
    char line[256];
    std::snprintf(line, sizeof(line), "%d,%.8f,%.6f,%.6f,%.6f,%.6f,%.6f\n", log.epoch, log.lr,
                  log.loss, log.ctc_audio, log.ctc_video, log.ce, log.eval_wer);
    log_text += line;

    if (eval_wer <= result.best_wer) {  // ties: prefer the later, longer-trained model
      result.best_wer = eval_wer;
      result.best_epoch = epoch;
      save_checkpoint(result.checkpoint_path, model);
    }
  }
  write_text_file(result.log_path, log_text);
  return result;
}

WerRow evaluate_grid(const Model& model, const Dataset& eval_set, const RunConfig& rc) {
  TaskTemplates templates(eval_set.spec);
  BeamOptions bopts = rc.beam_options();
  WerRow row;
  row.variant = to_string(model.variant());
  row.cells.emplace_back("clean", evaluate_condition(model, eval_set.utterances, std::nullopt,
                                                     templates, bopts, rc.seed));
  for (NoiseKind kind : rc.eval_noise_kinds()) {
    for (double snr : rc.eval_snrs()) {
      EvalCondition c = NoiseSpec{kind, snr};
      row.cells.emplace_back(condition_label(c),
                             evaluate_condition(model, eval_set.utterances, c, templates, bopts,
                                                rc.seed));
    }
  }
  return row;
}

std::string wer_csv(const WerRow& row) {
  std::string header = "variant";
  std::string values = row.variant;
  char buf[64];
  for (const auto& [label, wer_value] : row.cells) {
    header += "," + label;
    std::snprintf(buf, sizeof(buf), ",%.6f", wer_value);
    values += buf;
  }
  return header + "\n" + values + "\n";
}

std::vector<InfluenceReport> snr_influence_sweep(const Model& model, const Dataset& eval_set,
                                                 const RunConfig& rc) {
  if (model.variant() != Variant::bottleneck) {
    throw CheckpointMismatchError("influence sweep needs a bottleneck-variant checkpoint");
  }
  TaskTemplates templates(eval_set.spec);
  const int cap = rc.analyze_utts > 0
                      ? std::min<int>(rc.analyze_utts, static_cast<int>(eval_set.utterances.size()))
                      : static_cast<int>(eval_set.utterances.size());

  std::vector<InfluenceReport> reports;
  for (NoiseKind kind : rc.eval_noise_kinds()) {
    std::vector<EvalCondition> conditions;
    conditions.emplace_back(std::nullopt);  // clean leads each noise-type block
    for (double snr : rc.eval_snrs()) conditions.emplace_back(NoiseSpec{kind, snr});
    for (const EvalCondition& c : conditions) {
      InfluenceReport rep;
      rep.noise_type = to_string(kind);
      rep.snr_db = c.has_value() ? c->snr_db : std::numeric_limits<double>::infinity();
      for (int i = 0; i < cap; ++i) {
        const Utterance& u = eval_set.utterances[i];
        Tensor audio = corrupt_audio(u, c, templates, rc.seed);
        EncoderOutput enc = model.encode(audio, u.video);
        RolloutMatrix m = rollout(enc.trace);
        InfluenceRaw f = modality_influence(m, enc.trace.audio_ids(), enc.trace.video_ids());
        auto [f_va, f_av] = normalized_influence(f);
        rep.f_va_raw += f.v_to_a;
        rep.f_av_raw += f.a_to_v;
        rep.f_va_norm += f_va;
        rep.f_av_norm += f_av;
      }
      const double inv = 1.0 / static_cast<double>(cap);
      rep.f_va_raw *= inv;
      rep.f_av_raw *= inv;
      rep.f_va_norm *= inv;
      rep.f_av_norm *= inv;
      reports.push_back(std::move(rep));
    }
  }
  return reports;
}

std::string bench_csv(const std::vector<int>& fm_values, const std::vector<int>& fb_values,
                      int dim) {
  std::string out = "F_m,F_b,scheme,formula_pairs,measured_madds\n";
  char buf[160];
  for (int fm : fm_values) {
    for (AttentionScheme scheme : {AttentionScheme::concat, AttentionScheme::cross}) {
      CostReport r = attention_cost(fm, 0, scheme, dim);
      std::snprintf(buf, sizeof(buf), "%d,%d,%s,%llu,%llu\n", fm, 0, to_string(scheme).c_str(),
                    static_cast<unsigned long long>(r.formula_pairs),
                    static_cast<unsigned long long>(r.measured_madds));
      out += buf;
    }
    for (int fb : fb_values) {
      CostReport r = attention_cost(fm, fb, AttentionScheme::bottleneck, dim);
      std::snprintf(buf, sizeof(buf), "%d,%d,%s,%llu,%llu\n", fm, fb, "bottleneck",
                    static_cast<unsigned long long>(r.formula_pairs),
                    static_cast<unsigned long long>(r.measured_madds));
      out += buf;
    }
  }
  return out;
}

}  // namespace cobra
