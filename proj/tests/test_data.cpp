// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "cobra/data.hpp"

using namespace cobra;

namespace {

SyntheticTaskSpec small_spec() {
  SyntheticTaskSpec s;
  s.vocab_size = 6;
  s.viseme_classes = 3;
  s.frames_per_token = 4;
  s.audio_feat_dim = 5;
  s.video_feat_dim = 4;
  s.template_jitter_std = 0.0;
  s.utt_len_min = 2;
  s.utt_len_max = 4;
  s.video_rate = 2;
  s.seed = 99;
  return s;
}

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

// Bartlett-averaged periodogram via a naive DFT; good enough as a test oracle.
std::vector<double> bartlett_psd(const std::vector<double>& x, int seg_len) {
  const int n_seg = static_cast<int>(x.size()) / seg_len;
  std::vector<double> psd(seg_len / 2, 0.0);
  for (int s = 0; s < n_seg; ++s) {
    const double* seg = x.data() + static_cast<std::size_t>(s) * seg_len;
    for (int k = 1; k <= seg_len / 2; ++k) {
      double re = 0.0, im = 0.0;
      for (int t = 0; t < seg_len; ++t) {
        const double phase = -2.0 * 3.14159265358979323846 * k * t / seg_len;
        re += seg[t] * std::cos(phase);
        im += seg[t] * std::sin(phase);
      }
      psd[k - 1] += (re * re + im * im) / seg_len;
    }
  }
  for (double& v : psd) v /= n_seg;
  return psd;
}

}  // namespace

TEST_CASE("generate_utterance: zero jitter reproduces templates, viseme classes collide on video") {
  SyntheticTaskSpec spec = small_spec();
  TaskTemplates templates(spec);
  Rng rng(1);
  Utterance u = generate_utterance(templates, rng, "u0");

  CHECK(u.audio.rows() == static_cast<int>(u.transcript.size()) * spec.frames_per_token);
  CHECK(u.video.rows() ==
        static_cast<int>(u.transcript.size()) * spec.frames_per_token / spec.video_rate);

  for (std::size_t pos = 0; pos < u.transcript.size(); ++pos) {
    const Tensor& tpl = templates.audio_of(u.transcript[pos]);
    for (int f = 0; f < spec.frames_per_token; ++f)
      for (int d = 0; d < spec.audio_feat_dim; ++d)
        CHECK(u.audio.at(static_cast<int>(pos) * spec.frames_per_token + f, d) == tpl.at(f, d));
  }

  // tokens 1 and 4 share viseme class (1-1)%3 == (4-1)%3: identical video, distinct audio
  CHECK(spec.viseme_of(1) == spec.viseme_of(4));
  CHECK(*templates.video_of(spec.viseme_of(1)).data == *templates.video_of(spec.viseme_of(4)).data);
  CHECK(*templates.audio_of(1).data != *templates.audio_of(4).data);
}

TEST_CASE("video-only Bayes accuracy is C/V by counting") {
  SyntheticTaskSpec spec = small_spec();
  // With zero jitter a video-only observer recovers the viseme class exactly,
  // then must guess uniformly inside it; over a uniform token prior the best
  // accuracy is sum_c P(class c) / |c| = C / V.
  std::vector<int> class_size(spec.viseme_classes, 0);
  for (int token = 1; token <= spec.vocab_size; ++token) ++class_size[spec.viseme_of(token)];
  double bayes = 0.0;
  for (int c = 0; c < spec.viseme_classes; ++c) {
    bayes += (static_cast<double>(class_size[c]) / spec.vocab_size) / class_size[c];
  }
  CHECK(bayes == doctest::Approx(static_cast<double>(spec.viseme_classes) / spec.vocab_size)
                     .epsilon(1e-15));
}

TEST_CASE("utterances differing only within a viseme class have identical video") {
  SyntheticTaskSpec spec = small_spec();
  TaskTemplates templates(spec);
  // hand-build two transcripts that differ in a same-class token (1 vs 4)
  auto render = [&](const std::vector<int>& transcript) {
    Tensor video = Tensor::zeros(
        {static_cast<int>(transcript.size()) * spec.video_frames_per_token(), spec.video_feat_dim});
    for (std::size_t pos = 0; pos < transcript.size(); ++pos) {
      const Tensor& vt = templates.video_of(spec.viseme_of(transcript[pos]));
      for (int f = 0; f < spec.video_frames_per_token(); ++f)
        for (int d = 0; d < spec.video_feat_dim; ++d)
          video.at(static_cast<int>(pos) * spec.video_frames_per_token() + f, d) = vt.at(f, d);
    }
    return video;
  };
  CHECK(*render({1, 2, 3}).data == *render({4, 2, 3}).data);
  CHECK(*render({1, 2, 3}).data != *render({2, 2, 3}).data);
}

TEST_CASE("white noise: unit variance within 5% at 1e5 samples, seed-deterministic") {
  SyntheticTaskSpec spec = small_spec();
  TaskTemplates templates(spec);
  Rng rng(4242);
  Tensor n = synth_noise(NoiseKind::white, 10000, 10, rng, templates);
  double mean = 0.0;
  for (double v : *n.data) mean += v;
  mean /= static_cast<double>(n.numel());
  double var = 0.0;
  for (double v : *n.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n.numel());
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));

  Rng r1(7), r2(7);
  Tensor a = synth_noise(NoiseKind::pink, 64, 3, r1, templates);
  Tensor b = synth_noise(NoiseKind::pink, 64, 3, r2, templates);
  CHECK(*a.data == *b.data);
}

TEST_CASE("pink noise: spectral slope between -1.5 and -0.5 decades/decade") {
  SyntheticTaskSpec spec = small_spec();
  TaskTemplates templates(spec);
  Rng rng(31337);
  const int length = 16384, seg = 256;
  Tensor n = synth_noise(NoiseKind::pink, length, 1, rng, templates);
  std::vector<double> series(n.data->begin(), n.data->end());
  std::vector<double> psd = bartlett_psd(series, seg);

  // least-squares slope of log10 P against log10 f over f in [0.01, 0.2]
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  for (int k = 1; k <= seg / 2; ++k) {
    const double f = static_cast<double>(k) / seg;
    if (f < 0.01 || f > 0.2) continue;
    const double lx = std::log10(f), ly = std::log10(psd[k - 1]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++count;
  }
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  CHECK(slope < -0.5);
  CHECK(slope > -1.5);

  // normalized to unit variance
  double var = 0.0;
  for (double v : *n.data) var += v * v;
  var /= static_cast<double>(n.numel());
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("babble surrogate: K=1 is a clean utterance stream, K=6 unit variance") {
  SyntheticTaskSpec spec = small_spec();
  spec.utt_len_min = spec.utt_len_max = 3;  // fixed frames for the K=1 comparison
  TaskTemplates templates(spec);

  Rng noise_rng(88);
  Rng clean_rng(88);
  const int frames = 3 * spec.frames_per_token;
  Tensor k1 = synth_noise(NoiseKind::babble_surrogate, frames, spec.audio_feat_dim, noise_rng,
                          templates, 1);
  Utterance clean = generate_utterance(templates, clean_rng, "babble");
  CHECK(*k1.data == *clean.audio.data);

  Rng r6(99);
  Tensor k6 = synth_noise(NoiseKind::babble_surrogate, 4000, spec.audio_feat_dim, r6, templates, 6);
  double mean = 0.0;
  for (double v : *k6.data) mean += v;
  mean /= static_cast<double>(k6.numel());
  double var = 0.0;
  for (double v : *k6.data) var += (v - mean) * (v - mean);
  var /= static_cast<double>(k6.numel());
  CHECK(var == doctest::Approx(1.0).epsilon(1e-9));

  CHECK_THROWS_AS(
      synth_noise(NoiseKind::babble_surrogate, 16, spec.audio_feat_dim + 1, r6, templates),
      ConfigError);
}

TEST_CASE("mix_at_snr: power match at 0 dB, near-identity at +60 dB, scale oracle") {
  Rng rng(17);
  Tensor signal = Tensor::gaussian({40, 6}, 2.0, rng);
  Tensor noise = Tensor::gaussian({40, 6}, 1.0, rng);

  Tensor mixed0 = mix_at_snr(signal, noise, 0.0);
  Tensor added = Tensor::zeros(signal.shape);
  for (std::size_t i = 0; i < added.data->size(); ++i)
    (*added.data)[i] = (*mixed0.data)[i] - (*signal.data)[i];
  CHECK(mean_power(added) == doctest::Approx(mean_power(signal)).epsilon(1e-9));

  Tensor mixed60 = mix_at_snr(signal, noise, 60.0);
  double diff = 0.0;
  for (std::size_t i = 0; i < signal.data->size(); ++i) {
    const double d = (*mixed60.data)[i] - (*signal.data)[i];
    diff += d * d;
  }
  CHECK(std::sqrt(diff / static_cast<double>(signal.numel())) / std::sqrt(mean_power(signal)) <
        1e-3);

  // power 4 signal, power 1 noise, target 10 dB -> scale sqrt(4/10)
  Tensor s2 = Tensor::full({2, 2}, 2.0);   // power 4
  Tensor n1 = Tensor::from({2, 2}, {1, -1, 1, -1});  // power 1
  Tensor m10 = mix_at_snr(s2, n1, 10.0);
  const double scale = (*m10.data)[0] - 2.0;
  CHECK(scale == doctest::Approx(std::sqrt(0.4)).epsilon(1e-12));
  CHECK(std::sqrt(0.4) == doctest::Approx(0.6324555320336759).epsilon(1e-15));

  // measured SNR equals requested within 0.01 dB on random draws
  for (double target : {12.5, 2.5, -7.5}) {
    Tensor mixed = mix_at_snr(signal, noise, target);
    Tensor scaled_noise = Tensor::zeros(signal.shape);
    for (std::size_t i = 0; i < signal.data->size(); ++i)
      (*scaled_noise.data)[i] = (*mixed.data)[i] - (*signal.data)[i];
    const double measured = 10.0 * std::log10(mean_power(signal) / mean_power(scaled_noise));
    CHECK(std::abs(measured - target) < 0.01);
  }

  CHECK_THROWS_AS(mix_at_snr(Tensor::zeros({40, 6}), noise, 0.0), DataError);
  CHECK_THROWS_AS(mix_at_snr(signal, Tensor::zeros({2, 2}), 0.0), ShapeError);
}

TEST_CASE("time_mask: zero masks identity, bounds hold over many seeds") {
  Rng rng(5);
  Tensor x = Tensor::gaussian({10, 3}, 1.0, rng);
  Tensor same = time_mask(x, 3, 0, rng);
  CHECK(*same.data == *x.data);

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng mrng(seed);
    Tensor masked = time_mask(x, 9, 1, mrng);  // max_span = T-1
    int zero_rows = 0;
    for (int t = 0; t < 10; ++t) {
      bool all_zero = true;
      for (int d = 0; d < 3; ++d) all_zero = all_zero && masked.at(t, d) == 0.0;
      zero_rows += all_zero ? 1 : 0;
    }
    CHECK(zero_rows <= 9);  // at least one frame survives
  }

  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng mrng(seed ^ 0xabcd);
    Tensor masked = time_mask(x, 3, 2, mrng);
    int masked_rows = 0;
    for (int t = 0; t < 10; ++t) {
      bool all_zero = true;
      for (int d = 0; d < 3; ++d) all_zero = all_zero && masked.at(t, d) == 0.0;
      masked_rows += all_zero ? 1 : 0;
    }
    CHECK(masked_rows <= 2 * 3);
  }

  CHECK_THROWS_AS(time_mask(x, 10, 1, rng), ConfigError);
}

TEST_CASE("build_dataset: deterministic bytes, disjoint ids, exact sizes, round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "cobra_data_test";
  std::filesystem::remove_all(dir);
  SyntheticTaskSpec spec = small_spec();
  spec.template_jitter_std = 0.1;

  BuildResult one = build_dataset(spec, 12, 5, 777, (dir / "a").string());
  BuildResult two = build_dataset(spec, 12, 5, 777, (dir / "b").string());
  CHECK(file_bytes(one.train_path) == file_bytes(two.train_path));
  CHECK(file_bytes(one.eval_path) == file_bytes(two.eval_path));

  BuildResult other_seed = build_dataset(spec, 12, 5, 778, (dir / "c").string());
  CHECK(file_bytes(one.train_path) != file_bytes(other_seed.train_path));

  Dataset train = load_dataset(one.train_path);
  Dataset eval_set = load_dataset(one.eval_path);
  CHECK(train.utterances.size() == 12);
  CHECK(eval_set.utterances.size() == 5);
  std::set<std::string> ids;
  for (const Utterance& u : train.utterances) ids.insert(u.id);
  for (const Utterance& u : eval_set.utterances) ids.insert(u.id);
  CHECK(ids.size() == 17);  // fully disjoint

  // round trip is bit-exact
  const std::string again = (dir / "again.cbds").string();
  save_dataset(again, train);
  CHECK(file_bytes(again) == file_bytes(one.train_path));
  Dataset reloaded = load_dataset(again);
  REQUIRE(reloaded.utterances.size() == train.utterances.size());
  for (std::size_t i = 0; i < train.utterances.size(); ++i) {
    CHECK(reloaded.utterances[i].id == train.utterances[i].id);
    CHECK(reloaded.utterances[i].transcript == train.utterances[i].transcript);
    CHECK(*reloaded.utterances[i].audio.data == *train.utterances[i].audio.data);
    CHECK(*reloaded.utterances[i].video.data == *train.utterances[i].video.data);
  }

  CHECK_THROWS_AS(load_dataset((dir / "missing.cbds").string()), IoError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("task spec validation") {
  SyntheticTaskSpec spec = small_spec();
  spec.viseme_classes = spec.vocab_size;  // no ambiguity left
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = small_spec();
  spec.video_rate = 3;  // does not divide frames_per_token = 4
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = small_spec();
  spec.utt_len_min = 5;
  spec.utt_len_max = 4;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}
