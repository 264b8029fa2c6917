// SPDX-License-Identifier: Apache-2.0
#include "cobra/checkpoint.hpp"

#include <cstring>
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
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError("checkpoint: truncated read in " + path);
  }
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
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw IoError("checkpoint: truncated read in " + path);
  }
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, 8);
  return v;
}

std::string serialize_record(const std::map<std::string, std::string>& rec) {
  std::ostringstream os;
  for (const auto& [k, v] : rec) os << k << "=" << v << "\n";
  return os.str();
}

std::map<std::string, std::string> parse_record(const std::string& text) {
  std::map<std::string, std::string> rec;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    rec[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return rec;
}

const std::string& record_get(const std::map<std::string, std::string>& rec,
                              const std::string& key) {
  auto it = rec.find(key);
  if (it == rec.end()) {
    throw CheckpointMismatchError("checkpoint config record missing key '" + key + "'");
  }
  return it->second;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::map<std::string, std::string> config_record(const ModelConfig& cfg, Variant variant) {
  std::map<std::string, std::string> rec;
  rec["dim"] = std::to_string(cfg.dim);
  rec["layers"] = std::to_string(cfg.layers);
  rec["fusion_layer"] = std::to_string(cfg.fusion_layer);
  rec["bottleneck_len"] = std::to_string(cfg.bottleneck_len);
  rec["heads"] = std::to_string(cfg.heads);
  rec["ffn_dim"] = std::to_string(cfg.ffn_dim);
  rec["conv_kernel"] = std::to_string(cfg.conv_kernel);
  rec["strategy"] = to_string(cfg.strategy);
  rec["vocab_size"] = std::to_string(cfg.vocab_size);
  rec["decoder_layers"] = std::to_string(cfg.decoder_layers);
  rec["w_ctc"] = fmt_double(cfg.w_ctc);
  rec["seed"] = std::to_string(cfg.seed);
  rec["audio_feat_dim"] = std::to_string(cfg.audio_feat_dim);
  rec["video_feat_dim"] = std::to_string(cfg.video_feat_dim);
  rec["bottleneck_init_std"] = fmt_double(cfg.bottleneck_init_std);
  rec["dropout"] = fmt_double(cfg.dropout);
  rec["variant"] = to_string(variant);
  return rec;
}

ModelConfig config_from_record(const std::map<std::string, std::string>& rec) {
  ModelConfig cfg;
  cfg.dim = std::stoi(record_get(rec, "dim"));
  cfg.layers = std::stoi(record_get(rec, "layers"));
  cfg.fusion_layer = std::stoi(record_get(rec, "fusion_layer"));
  cfg.bottleneck_len = std::stoi(record_get(rec, "bottleneck_len"));
  cfg.heads = std::stoi(record_get(rec, "heads"));
  cfg.ffn_dim = std::stoi(record_get(rec, "ffn_dim"));
  cfg.conv_kernel = std::stoi(record_get(rec, "conv_kernel"));
  cfg.strategy = fusion_strategy_from(record_get(rec, "strategy"));
  cfg.vocab_size = std::stoi(record_get(rec, "vocab_size"));
  cfg.decoder_layers = std::stoi(record_get(rec, "decoder_layers"));
  cfg.w_ctc = std::stod(record_get(rec, "w_ctc"));
  cfg.seed = std::stoull(record_get(rec, "seed"));
  cfg.audio_feat_dim = std::stoi(record_get(rec, "audio_feat_dim"));
  cfg.video_feat_dim = std::stoi(record_get(rec, "video_feat_dim"));
  cfg.bottleneck_init_std = std::stod(record_get(rec, "bottleneck_init_std"));
  cfg.dropout = std::stod(record_get(rec, "dropout"));
  return cfg;
}

Variant variant_from_record(const std::map<std::string, std::string>& rec) {
  return variant_from(record_get(rec, "variant"));
}

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open for writing: " + path);
  os.write("CBRA", 4);
  write_u32(os, kCheckpointVersion);
  const std::string rec = serialize_record(config_record(model.config(), model.variant()));
  write_u32(os, static_cast<std::uint32_t>(rec.size()));
  os.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  const auto& entries = model.params().entries();
  write_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : *t.data) write_f64(os, v);
  }
  if (!os) throw IoError("checkpoint: write failed: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "CBRA", 4) != 0) {
    throw IoError("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(is, path);
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version) + " in " + path);
  }
  const std::uint32_t rec_len = read_u32(is, path);
  std::string rec_text(rec_len, '\0');
  if (!is.read(rec_text.data(), rec_len)) throw IoError("checkpoint: truncated record in " + path);
  const auto rec = parse_record(rec_text);

  Model model(config_from_record(rec), variant_from_record(rec));

  const std::uint32_t count = read_u32(is, path);
  const auto& entries = model.params().entries();
  if (count != entries.size()) {
    throw CheckpointMismatchError("checkpoint: " + std::to_string(count) + " blocks, model has " +
                                  std::to_string(entries.size()));
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw IoError("checkpoint: truncated name in " + path);
    const std::uint32_t rank = read_u32(is, path);
    Shape shape(rank);
    for (std::uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(read_u32(is, path));
    if (name != entries[i].first) {
      throw CheckpointMismatchError("checkpoint: block '" + name + "' where model expects '" +
                                    entries[i].first + "'");
    }
    Tensor t = entries[i].second;
    if (shape != t.shape) {
      throw CheckpointMismatchError("checkpoint: parameter '" + name + "' has shape " +
                                    shape_str(shape) + ", model expects " + shape_str(t.shape));
    }
    for (double& v : *t.data) v = read_f64(is, path);
  }
  return model;
}

}  // namespace cobra
