// SPDX-License-Identifier: Apache-2.0
//
// cobra gen|train|eval|analyze|bench --config <path> [--checkpoint <path>]
//                                    [--variant <name>] [--seed <int>]
//
// Exit codes: 0 success, 1 internal error, 2 input/path error,
// 3 config/checkpoint mismatch.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "cobra/checkpoint.hpp"
#include "cobra/config.hpp"
#include "cobra/train.hpp"

namespace {

using namespace cobra;

std::uint64_t file_checksum(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for checksum: " + path);
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return fnv1a64(bytes);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) throw IoError("write failed: " + path);
}

struct CommonArgs {
  std::string config_path;
  std::string checkpoint_path;
  std::string variant_name = "bottleneck";
  std::int64_t seed = -1;
};

RunConfig load_config(const CommonArgs& args) {
  RunConfig rc = load_run_config(args.config_path);
  apply_env_overrides(rc);
  if (args.seed >= 0) rc.seed = static_cast<std::uint64_t>(args.seed);
  rc.validate();
  return rc;
}

std::string resolve_checkpoint(const CommonArgs& args, const RunConfig& rc) {
  if (!args.checkpoint_path.empty()) return args.checkpoint_path;
  return rc.checkpoint_path(variant_from(args.variant_name));
}

int cmd_gen(const CommonArgs& args) {
  RunConfig rc = load_config(args);
  BuildResult r = build_dataset(rc.task_spec(), rc.n_train, rc.n_eval, rc.seed, rc.out_dir);
  std::printf("train: %s (%d utterances, fnv64 %016llx)\n", r.train_path.c_str(), rc.n_train,
              static_cast<unsigned long long>(file_checksum(r.train_path)));
  std::printf("eval:  %s (%d utterances, fnv64 %016llx)\n", r.eval_path.c_str(), rc.n_eval,
              static_cast<unsigned long long>(file_checksum(r.eval_path)));
  return 0;
}

int cmd_train(const CommonArgs& args) {
  RunConfig rc = load_config(args);
  const Variant variant = variant_from(args.variant_name);
  TrainResult r = train_model(rc, variant);
  std::printf("checkpoint: %s (best epoch %d, clean eval wer %.4f)\n", r.checkpoint_path.c_str(),
              r.best_epoch, r.best_wer);
  std::printf("log: %s\n", r.log_path.c_str());
  return 0;
}

Model load_matching_model(const CommonArgs& args, const RunConfig& rc, const Dataset& eval_set) {
  Model model = load_checkpoint(resolve_checkpoint(args, rc));
  const ModelConfig& mc = model.config();
  if (mc.vocab_size != eval_set.spec.vocab_size ||
      mc.audio_feat_dim != eval_set.spec.audio_feat_dim ||
      mc.video_feat_dim != eval_set.spec.video_feat_dim) {
    throw CheckpointMismatchError(
        "checkpoint was trained for a different task (vocab or feature dims differ)");
  }
  return model;
}

int cmd_eval(const CommonArgs& args) {
  RunConfig rc = load_config(args);
  Dataset eval_set = load_dataset(rc.eval_dataset_path());
  Model model = load_matching_model(args, rc, eval_set);
  WerRow row = evaluate_grid(model, eval_set, rc);
  const std::string path = rc.wer_csv_path(model.variant());
  write_text_file(path, wer_csv(row));
  std::printf("wer table: %s\n", path.c_str());
  for (const auto& [label, value] : row.cells) std::printf("  %s: %.4f\n", label.c_str(), value);
  return 0;
}

int cmd_analyze(const CommonArgs& args) {
  RunConfig rc = load_config(args);
  Dataset eval_set = load_dataset(rc.eval_dataset_path());
  Model model = load_matching_model(args, rc, eval_set);
  std::vector<InfluenceReport> reports = snr_influence_sweep(model, eval_set, rc);
  const std::string path = rc.influence_csv_path(model.variant());
  write_text_file(path, influence_csv(reports));
  std::printf("influence table: %s (%zu rows)\n", path.c_str(), reports.size());
  return 0;
}

int cmd_bench(const CommonArgs& args) {
  RunConfig rc = load_config(args);
  std::error_code ec;
  std::filesystem::create_directories(rc.out_dir, ec);
  if (ec) throw IoError("cannot create output directory: " + rc.out_dir);
  const std::string path = rc.bench_csv_path();
  write_text_file(path, bench_csv(rc.bench_fm_values(), rc.bench_fb_values(), rc.bench_dim));
  std::printf("cost table: %s\n", path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bottleneck-token audio-visual recognition toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub, bool with_ckpt) {
    sub->add_option("--config", args.config_path, "key=value config file")->required();
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_option("--variant", args.variant_name, "bottleneck|audio_only");
    if (with_ckpt) sub->add_option("--checkpoint", args.checkpoint_path, "checkpoint file");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate the synthetic dataset");
  add_common(gen, false);
  CLI::App* train = app.add_subcommand("train", "train a model on the generated dataset");
  add_common(train, false);
  CLI::App* eval_cmd = app.add_subcommand("eval", "decode the eval set over the noise grid");
  add_common(eval_cmd, true);
  CLI::App* analyze = app.add_subcommand("analyze", "cross-modal influence sweep");
  add_common(analyze, true);
  CLI::App* bench = app.add_subcommand("bench", "attention-cost accounting sweep");
  add_common(bench, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(args);
    if (train->parsed()) return cmd_train(args);
    if (eval_cmd->parsed()) return cmd_eval(args);
    if (analyze->parsed()) return cmd_analyze(args);
    if (bench->parsed()) return cmd_bench(args);
  } catch (const cobra::CheckpointMismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const cobra::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const cobra::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
