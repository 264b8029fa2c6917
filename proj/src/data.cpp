// SPDX-License-Identifier: Apache-2.0
#include "cobra/data.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cobra {

namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("dataset: truncated read in " + path);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t u;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(u >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::istream& is, const std::string& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("dataset: truncated read in " + path);
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

void write_tensor(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
  for (int d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
  for (double v : *t.data) write_f64(os, v);
}

Tensor read_tensor(std::istream& is, const std::string& path) {
  const std::uint32_t rank = read_u32(is, path);
  Shape shape(rank);
  for (std::uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(read_u32(is, path));
  Tensor t = Tensor::zeros(shape);
  for (double& v : *t.data) v = read_f64(is, path);
  return t;
}

constexpr std::uint32_t kDatasetVersion = 1;

std::string spec_text(const SyntheticTaskSpec& s) {
  std::ostringstream os;
  os << "vocab_size=" << s.vocab_size << "\n";
  os << "viseme_classes=" << s.viseme_classes << "\n";
  os << "frames_per_token=" << s.frames_per_token << "\n";
  os << "audio_feat_dim=" << s.audio_feat_dim << "\n";
  os << "video_feat_dim=" << s.video_feat_dim << "\n";
  os.precision(17);
  os << "template_jitter_std=" << s.template_jitter_std << "\n";
  os << "utt_len_min=" << s.utt_len_min << "\n";
  os << "utt_len_max=" << s.utt_len_max << "\n";
  os << "video_rate=" << s.video_rate << "\n";
  os << "seed=" << s.seed << "\n";
  return os.str();
}

SyntheticTaskSpec spec_from_text(const std::string& text, const std::string& path) {
  SyntheticTaskSpec s;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "vocab_size") s.vocab_size = std::stoi(val);
    else if (key == "viseme_classes") s.viseme_classes = std::stoi(val);
    else if (key == "frames_per_token") s.frames_per_token = std::stoi(val);
    else if (key == "audio_feat_dim") s.audio_feat_dim = std::stoi(val);
    else if (key == "video_feat_dim") s.video_feat_dim = std::stoi(val);
    else if (key == "template_jitter_std") s.template_jitter_std = std::stod(val);
    else if (key == "utt_len_min") s.utt_len_min = std::stoi(val);
    else if (key == "utt_len_max") s.utt_len_max = std::stoi(val);
    else if (key == "video_rate") s.video_rate = std::stoi(val);
    else if (key == "seed") s.seed = std::stoull(val);
    else throw IoError("dataset: unknown spec key '" + key + "' in " + path);
  }
  return s;
}

}  // namespace

void SyntheticTaskSpec::validate() const {
  if (vocab_size < 2) throw ConfigError("task spec: vocab_size must be >= 2");
  if (viseme_classes < 1 || viseme_classes >= vocab_size) {
    throw ConfigError("task spec: need 1 <= viseme_classes < vocab_size (video-only ambiguity)");
  }
  if (frames_per_token < 1 || audio_feat_dim < 1 || video_feat_dim < 1) {
    throw ConfigError("task spec: frame and feature sizes must be >= 1");
  }
  if (template_jitter_std < 0.0) throw ConfigError("task spec: jitter std must be >= 0");
  if (utt_len_min < 1 || utt_len_max < utt_len_min) {
    throw ConfigError("task spec: bad utterance length range");
  }
  if (video_rate < 1 || frames_per_token % video_rate != 0) {
    throw ConfigError("task spec: video_rate must divide frames_per_token");
  }
}

int SyntheticTaskSpec::viseme_of(int token) const { return (token - 1) % viseme_classes; }

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::white: return "white";
    case NoiseKind::pink: return "pink";
    case NoiseKind::babble_surrogate: return "babble";
  }
  return "?";
}

NoiseKind noise_kind_from(const std::string& s) {
  if (s == "white") return NoiseKind::white;
  if (s == "pink") return NoiseKind::pink;
  if (s == "babble" || s == "babble_surrogate") return NoiseKind::babble_surrogate;
  throw ConfigError("unknown noise kind '" + s + "' (expected white|pink|babble)");
}

TaskTemplates::TaskTemplates(const SyntheticTaskSpec& spec) : spec_(spec) {
  spec_.validate();
  Rng rng(stream_seed(spec_.seed, {fnv1a64("templates")}));
  audio_templates_.reserve(spec_.vocab_size);
  for (int token = 1; token <= spec_.vocab_size; ++token) {
    audio_templates_.push_back(
        Tensor::gaussian({spec_.frames_per_token, spec_.audio_feat_dim}, 1.0, rng));
  }
  video_templates_.reserve(spec_.viseme_classes);
  for (int c = 0; c < spec_.viseme_classes; ++c) {
    video_templates_.push_back(
        Tensor::gaussian({spec_.video_frames_per_token(), spec_.video_feat_dim}, 1.0, rng));
  }
}

const Tensor& TaskTemplates::audio_of(int token) const {
  if (token < 1 || token > spec_.vocab_size) {
    throw UsageError("TaskTemplates: token " + std::to_string(token) + " outside vocab");
  }
  return audio_templates_[token - 1];
}

const Tensor& TaskTemplates::video_of(int viseme) const {
  if (viseme < 0 || viseme >= spec_.viseme_classes) {
    throw UsageError("TaskTemplates: viseme class " + std::to_string(viseme) + " out of range");
  }
  return video_templates_[viseme];
}

Utterance generate_utterance(const TaskTemplates& templates, Rng& rng, std::string id) {
  const SyntheticTaskSpec& spec = templates.spec();
  Utterance u;
  u.id = std::move(id);
  const int len = rng.uniform_int(spec.utt_len_min, spec.utt_len_max);
  u.transcript.resize(len);
  for (int& t : u.transcript) t = rng.uniform_int(1, spec.vocab_size);

  const int fa = len * spec.frames_per_token;
  const int fv = len * spec.video_frames_per_token();
  u.audio = Tensor::zeros({fa, spec.audio_feat_dim});
  u.video = Tensor::zeros({fv, spec.video_feat_dim});
  for (int pos = 0; pos < len; ++pos) {
    const Tensor& at = templates.audio_of(u.transcript[pos]);
    for (int f = 0; f < spec.frames_per_token; ++f)
      for (int d = 0; d < spec.audio_feat_dim; ++d)
        u.audio.at(pos * spec.frames_per_token + f, d) =
            at.at(f, d) + spec.template_jitter_std * rng.gaussian();
    const Tensor& vt = templates.video_of(spec.viseme_of(u.transcript[pos]));
    for (int f = 0; f < spec.video_frames_per_token(); ++f)
      for (int d = 0; d < spec.video_feat_dim; ++d)
        u.video.at(pos * spec.video_frames_per_token() + f, d) =
            vt.at(f, d) + spec.template_jitter_std * rng.gaussian();
  }
  return u;
}

Tensor synth_noise(NoiseKind kind, int length, int dim, Rng& rng, const TaskTemplates& templates,
                   int k_streams) {
  if (length < 1 || dim < 1) throw ConfigError("synth_noise: length and dim must be >= 1");
  switch (kind) {
    case NoiseKind::white: {
      Tensor n = Tensor::zeros({length, dim});
      for (double& v : *n.data) v = rng.gaussian();
      return n;
    }
    case NoiseKind::pink: {
      // Cumulative cascade of three one-pole lowpasses plus a direct term
      // (Kellet's economy pinking filter), run independently per channel,
      // then normalized to unit sample variance.
      Tensor n = Tensor::zeros({length, dim});
      for (int d = 0; d < dim; ++d) {
        double b0 = 0.0, b1 = 0.0, b2 = 0.0;
        for (int t = 0; t < length; ++t) {
          const double w = rng.gaussian();
          b0 = 0.99765 * b0 + w * 0.0990460;
          b1 = 0.96300 * b1 + w * 0.2965164;
          b2 = 0.57000 * b2 + w * 1.0526913;
          n.at(t, d) = b0 + b1 + b2 + w * 0.1848;
        }
      }
      double mean = 0.0;
      for (double v : *n.data) mean += v;
      mean /= static_cast<double>(n.numel());
      double var = 0.0;
      for (double v : *n.data) var += (v - mean) * (v - mean);
      var /= static_cast<double>(n.numel());
      const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
      for (double& v : *n.data) v = (v - mean) * inv;
      return n;
    }
    case NoiseKind::babble_surrogate: {
      if (dim != templates.spec().audio_feat_dim) {
        throw ConfigError("synth_noise: babble surrogate needs dim == audio_feat_dim (" +
                          std::to_string(templates.spec().audio_feat_dim) + "), got " +
                          std::to_string(dim));
      }
      if (k_streams < 1) throw ConfigError("synth_noise: babble needs k_streams >= 1");
      Tensor n = Tensor::zeros({length, dim});
      for (int s = 0; s < k_streams; ++s) {
        // one background speaker: clean utterances streamed end to end
        int t = 0;
        while (t < length) {
          Utterance u = generate_utterance(templates, rng, "babble");
          const int fa = u.audio.rows();
          for (int f = 0; f < fa && t < length; ++f, ++t)
            for (int d = 0; d < dim; ++d) n.at(t, d) += u.audio.at(f, d);
        }
      }
      if (k_streams > 1) {
        double mean = 0.0;
        for (double v : *n.data) mean += v;
        mean /= static_cast<double>(n.numel());
        double var = 0.0;
        for (double v : *n.data) var += (v - mean) * (v - mean);
        var /= static_cast<double>(n.numel());
        const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
        for (double& v : *n.data) v = (v - mean) * inv;
      }
      return n;
    }
  }
  throw ConfigError("synth_noise: unknown noise kind");
}

double mean_power(const Tensor& x) {
  double acc = 0.0;
  for (double v : *x.data) acc += v * v;
  return acc / static_cast<double>(x.numel());
}

Tensor mix_at_snr(const Tensor& signal, const Tensor& noise, double snr_db) {
  if (signal.shape != noise.shape) {
    throw ShapeError("mix_at_snr: signal " + shape_str(signal.shape) + " vs noise " +
                     shape_str(noise.shape));
  }
  const double p_signal = mean_power(signal);
  if (p_signal <= 0.0) throw DataError("mix_at_snr: degenerate zero-power signal");
  const double p_noise = mean_power(noise);
  if (p_noise <= 0.0) throw DataError("mix_at_snr: zero-power noise");
  const double scale = std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));
  Tensor out = Tensor::zeros(signal.shape);
  for (std::size_t i = 0; i < out.data->size(); ++i)
    (*out.data)[i] = (*signal.data)[i] + scale * (*noise.data)[i];
  return out;
}

Tensor time_mask(const Tensor& x, int max_span, int n_masks, Rng& rng) {
  const int T = x.rows();
  if (max_span >= T) throw ConfigError("time_mask: max_span must be < frame count");
  Tensor out = x.clone_values();
  for (int m = 0; m < n_masks; ++m) {
    const int span = rng.uniform_int(1, max_span);
    const int start = rng.uniform_int(0, T - span);
    for (int t = start; t < start + span; ++t)
      for (int d = 0; d < x.cols(); ++d) out.at(t, d) = 0.0;
  }
  return out;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("dataset: cannot open for writing: " + path);
  os.write("CBDS", 4);
  write_u32(os, kDatasetVersion);
  const std::string spec = spec_text(ds.spec);
  write_u32(os, static_cast<std::uint32_t>(spec.size()));
  os.write(spec.data(), static_cast<std::streamsize>(spec.size()));
  write_u32(os, static_cast<std::uint32_t>(ds.utterances.size()));
  for (const Utterance& u : ds.utterances) {
    write_u32(os, static_cast<std::uint32_t>(u.id.size()));
    os.write(u.id.data(), static_cast<std::streamsize>(u.id.size()));
    write_u32(os, static_cast<std::uint32_t>(u.transcript.size()));
    for (int t : u.transcript) write_u32(os, static_cast<std::uint32_t>(t));
    write_tensor(os, u.audio);
    write_tensor(os, u.video);
  }
  if (!os) throw IoError("dataset: write failed: " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("dataset: cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "CBDS", 4) != 0) {
    throw IoError("dataset: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(is, path);
  if (version != kDatasetVersion) {
    throw IoError("dataset: unsupported version " + std::to_string(version) + " in " + path);
  }
  const std::uint32_t spec_len = read_u32(is, path);
  std::string text(spec_len, '\0');
  if (!is.read(text.data(), spec_len)) throw IoError("dataset: truncated spec in " + path);
  Dataset ds;
  ds.spec = spec_from_text(text, path);
  const std::uint32_t count = read_u32(is, path);
  ds.utterances.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Utterance u;
    const std::uint32_t id_len = read_u32(is, path);
    u.id.resize(id_len);
    if (!is.read(u.id.data(), id_len)) throw IoError("dataset: truncated id in " + path);
    const std::uint32_t tr_len = read_u32(is, path);
    u.transcript.resize(tr_len);
    for (std::uint32_t t = 0; t < tr_len; ++t) u.transcript[t] = static_cast<int>(read_u32(is, path));
    u.audio = read_tensor(is, path);
    u.video = read_tensor(is, path);
    ds.utterances.push_back(std::move(u));
  }
  return ds;
}

BuildResult build_dataset(const SyntheticTaskSpec& spec, int n_train, int n_eval,
                          std::uint64_t seed, const std::string& out_dir) {
  if (n_train < 1 || n_eval < 1) throw ConfigError("build_dataset: counts must be >= 1");
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("build_dataset: cannot create output directory: " + out_dir);

  TaskTemplates templates(spec);
  auto make_split = [&](const std::string& tag, int count) {
    Dataset ds;
    ds.spec = spec;
    ds.utterances.reserve(count);
    for (int i = 0; i < count; ++i) {
      char id[64];
      std::snprintf(id, sizeof(id), "utt_%s_%06d", tag.c_str(), i);
      Rng rng(stream_seed(seed, {fnv1a64(tag), static_cast<std::uint64_t>(i)}));
      ds.utterances.push_back(generate_utterance(templates, rng, id));
    }
    return ds;
  };

  BuildResult out;
  out.train_path = (std::filesystem::path(out_dir) / "train.cbds").string();
  out.eval_path = (std::filesystem::path(out_dir) / "eval.cbds").string();
  save_dataset(out.train_path, make_split("train", n_train));
  save_dataset(out.eval_path, make_split("eval", n_eval));
  return out;
}

}  // namespace cobra
