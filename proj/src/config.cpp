// SPDX-License-Identifier: Apache-2.0
#include "cobra/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace cobra {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

}  // namespace

void RunConfig::validate() const {
  model_config().validate();
  task_spec().validate();
  if (n_train < 1 || n_eval < 1) throw ConfigError("config: n_train and n_eval must be >= 1");
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (lr_peak <= 0.0) throw ConfigError("config: lr_peak must be > 0");
  if (warmup_epochs < 0.0) throw ConfigError("config: warmup_epochs must be >= 0");
  if (beam < 1) throw ConfigError("config: beam must be >= 1");
  if (decode_lambda < 0.0 || decode_lambda > 1.0) {
    throw ConfigError("config: decode_lambda must be in [0,1]");
  }
  if (train_snr_min > train_snr_max) throw ConfigError("config: train snr range inverted");
  if (time_mask_spans < 0 || time_mask_max_span < 0) {
    throw ConfigError("config: time mask settings must be >= 0");
  }
  if (curriculum_epochs < 0) throw ConfigError("config: curriculum_epochs must be >= 0");
  noise_kind_from(train_noise);
  eval_noise_kinds();
  eval_snrs();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.dim = dim;
  m.layers = layers;
  m.fusion_layer = fusion_layer;
  m.bottleneck_len = bottleneck_len;
  m.heads = heads;
  m.ffn_dim = ffn_dim;
  m.conv_kernel = conv_kernel;
  m.strategy = fusion_strategy_from(strategy);
  m.vocab_size = vocab_size;
  m.decoder_layers = decoder_layers;
  m.w_ctc = w_ctc;
  m.seed = seed;
  m.audio_feat_dim = audio_feat_dim;
  m.video_feat_dim = video_feat_dim;
  m.bottleneck_init_std = bottleneck_init_std;
  m.dropout = dropout;
  return m;
}

SyntheticTaskSpec RunConfig::task_spec() const {
  SyntheticTaskSpec t;
  t.vocab_size = vocab_size;
  t.viseme_classes = viseme_classes;
  t.frames_per_token = frames_per_token;
  t.audio_feat_dim = audio_feat_dim;
  t.video_feat_dim = video_feat_dim;
  t.template_jitter_std = jitter_std;
  t.utt_len_min = utt_len_min;
  t.utt_len_max = utt_len_max;
  t.video_rate = video_rate;
  t.seed = seed;
  return t;
}

BeamOptions RunConfig::beam_options() const {
  BeamOptions b;
  b.beam = beam;
  b.lambda = decode_lambda;
  b.length_bonus = length_bonus;
  b.max_len = max_decode_len > 0 ? max_decode_len : utt_len_max + 2;
  return b;
}

std::vector<NoiseKind> RunConfig::eval_noise_kinds() const {
  std::vector<NoiseKind> kinds;
  for (const std::string& s : split_csv(eval_noise_types)) kinds.push_back(noise_kind_from(s));
  return kinds;
}

std::vector<double> RunConfig::eval_snrs() const {
  std::vector<double> grid;
  for (const std::string& s : split_csv(eval_snr_grid)) grid.push_back(to_double("eval_snr_grid", s));
  std::sort(grid.begin(), grid.end(), std::greater<double>());
  return grid;
}

std::vector<int> RunConfig::bench_fm_values() const {
  std::vector<int> out;
  for (const std::string& s : split_csv(bench_fm)) out.push_back(to_int("bench_fm", s));
  return out;
}

std::vector<int> RunConfig::bench_fb_values() const {
  std::vector<int> out;
  for (const std::string& s : split_csv(bench_fb)) out.push_back(to_int("bench_fb", s));
  return out;
}

std::string RunConfig::train_dataset_path() const {
  return (std::filesystem::path(out_dir) / "train.cbds").string();
}
std::string RunConfig::eval_dataset_path() const {
  return (std::filesystem::path(out_dir) / "eval.cbds").string();
}
std::string RunConfig::checkpoint_path(Variant v) const {
  return (std::filesystem::path(out_dir) / ("model_" + to_string(v) + ".ckpt")).string();
}
std::string RunConfig::train_log_path(Variant v) const {
  return (std::filesystem::path(out_dir) / ("train_log_" + to_string(v) + ".csv")).string();
}
std::string RunConfig::wer_csv_path(Variant v) const {
  return (std::filesystem::path(out_dir) / ("wer_" + to_string(v) + ".csv")).string();
}
std::string RunConfig::influence_csv_path(Variant v) const {
  return (std::filesystem::path(out_dir) / ("influence_" + to_string(v) + ".csv")).string();
}
std::string RunConfig::bench_csv_path() const {
  return (std::filesystem::path(out_dir) / "bench.csv").string();
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig rc;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" +
                        line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));

    if (key == "dim") rc.dim = to_int(key, val);
    else if (key == "layers") rc.layers = to_int(key, val);
    else if (key == "fusion_layer") rc.fusion_layer = to_int(key, val);
    else if (key == "bottleneck_len") rc.bottleneck_len = to_int(key, val);
    else if (key == "heads") rc.heads = to_int(key, val);
    else if (key == "ffn_dim") rc.ffn_dim = to_int(key, val);
    else if (key == "conv_kernel") rc.conv_kernel = to_int(key, val);
    else if (key == "strategy") rc.strategy = val;
    else if (key == "decoder_layers") rc.decoder_layers = to_int(key, val);
    else if (key == "w_ctc") rc.w_ctc = to_double(key, val);
    else if (key == "bottleneck_init_std") rc.bottleneck_init_std = to_double(key, val);
    else if (key == "dropout") rc.dropout = to_double(key, val);
    else if (key == "vocab_size") rc.vocab_size = to_int(key, val);
    else if (key == "viseme_classes") rc.viseme_classes = to_int(key, val);
    else if (key == "frames_per_token") rc.frames_per_token = to_int(key, val);
    else if (key == "audio_feat_dim") rc.audio_feat_dim = to_int(key, val);
    else if (key == "video_feat_dim") rc.video_feat_dim = to_int(key, val);
    else if (key == "jitter_std") rc.jitter_std = to_double(key, val);
    else if (key == "utt_len_min") rc.utt_len_min = to_int(key, val);
    else if (key == "utt_len_max") rc.utt_len_max = to_int(key, val);
    else if (key == "video_rate") rc.video_rate = to_int(key, val);
    else if (key == "n_train") rc.n_train = to_int(key, val);
    else if (key == "n_eval") rc.n_eval = to_int(key, val);
    else if (key == "epochs") rc.epochs = to_int(key, val);
    else if (key == "lr_peak") rc.lr_peak = to_double(key, val);
    else if (key == "warmup_epochs") rc.warmup_epochs = to_double(key, val);
    else if (key == "weight_decay") rc.weight_decay = to_double(key, val);
    else if (key == "label_smoothing") rc.label_smoothing = to_double(key, val);
    else if (key == "grad_clip") rc.grad_clip = to_double(key, val);
    else if (key == "curriculum_epochs") rc.curriculum_epochs = to_int(key, val);
    else if (key == "curriculum_max_len") rc.curriculum_max_len = to_int(key, val);
    else if (key == "train_noise") rc.train_noise = val;
    else if (key == "train_snr_min") rc.train_snr_min = to_double(key, val);
    else if (key == "train_snr_max") rc.train_snr_max = to_double(key, val);
    else if (key == "time_mask_spans") rc.time_mask_spans = to_int(key, val);
    else if (key == "time_mask_max_span") rc.time_mask_max_span = to_int(key, val);
    else if (key == "beam") rc.beam = to_int(key, val);
    else if (key == "decode_lambda") rc.decode_lambda = to_double(key, val);
    else if (key == "length_bonus") rc.length_bonus = to_double(key, val);
    else if (key == "max_decode_len") rc.max_decode_len = to_int(key, val);
    else if (key == "eval_noise_types") rc.eval_noise_types = val;
    else if (key == "eval_snr_grid") rc.eval_snr_grid = val;
    else if (key == "analyze_utts") rc.analyze_utts = to_int(key, val);
    else if (key == "bench_fm") rc.bench_fm = val;
    else if (key == "bench_fb") rc.bench_fb = val;
    else if (key == "bench_dim") rc.bench_dim = to_int(key, val);
    else if (key == "out_dir") rc.out_dir = val;
    else if (key == "seed") rc.seed = to_u64(key, val);
    else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  rc.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_run_config(buf.str());
}

void apply_env_overrides(RunConfig& rc) {
  if (const char* out = std::getenv("COBRA_OUT"); out != nullptr && out[0] != '\0') {
    rc.out_dir = out;
  }
}

}  // namespace cobra
