// SPDX-License-Identifier: Apache-2.0
//
// Python bindings for the core operations: numpy in, numpy out.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cobra/analysis.hpp"
#include "cobra/checkpoint.hpp"
#include "cobra/data.hpp"
#include "cobra/objective.hpp"
#include "cobra/train.hpp"

namespace py = pybind11;
using namespace cobra;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw UsageError("expected a 2-D float64 array");
  Tensor t = Tensor::zeros({static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1))});
  std::copy(a.data(), a.data() + a.size(), t.data->begin());
  return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  if (t.shape.size() != 2) throw UsageError("expected a 2-D tensor");
  py::array_t<double> a({t.shape[0], t.shape[1]});
  std::copy(t.data->begin(), t.data->end(), a.mutable_data());
  return a;
}

ModelConfig config_from_dict(const py::dict& d) {
  ModelConfig cfg;
  for (auto item : d) {
    const std::string key = py::cast<std::string>(item.first);
    if (key == "dim") cfg.dim = py::cast<int>(item.second);
    else if (key == "layers") cfg.layers = py::cast<int>(item.second);
    else if (key == "fusion_layer") cfg.fusion_layer = py::cast<int>(item.second);
    else if (key == "bottleneck_len") cfg.bottleneck_len = py::cast<int>(item.second);
    else if (key == "heads") cfg.heads = py::cast<int>(item.second);
    else if (key == "ffn_dim") cfg.ffn_dim = py::cast<int>(item.second);
    else if (key == "conv_kernel") cfg.conv_kernel = py::cast<int>(item.second);
    else if (key == "strategy") cfg.strategy = fusion_strategy_from(py::cast<std::string>(item.second));
    else if (key == "vocab_size") cfg.vocab_size = py::cast<int>(item.second);
    else if (key == "decoder_layers") cfg.decoder_layers = py::cast<int>(item.second);
    else if (key == "w_ctc") cfg.w_ctc = py::cast<double>(item.second);
    else if (key == "seed") cfg.seed = py::cast<std::uint64_t>(item.second);
    else if (key == "audio_feat_dim") cfg.audio_feat_dim = py::cast<int>(item.second);
    else if (key == "video_feat_dim") cfg.video_feat_dim = py::cast<int>(item.second);
    else if (key == "dropout") cfg.dropout = py::cast<double>(item.second);
    else throw ConfigError("unknown model config key '" + key + "'");
  }
  return cfg;
}

AttentionTrace trace_from_steps(
    const std::vector<std::pair<std::vector<int>, py::array_t<double>>>& steps, int n_audio,
    int n_video, int n_bottleneck) {
  AttentionTrace trace;
  trace.n_audio = n_audio;
  trace.n_video = n_video;
  trace.n_bottleneck = n_bottleneck;
  int id = 0;
  for (const auto& [ids, attn] : steps) {
    TraceStep s;
    s.sub_step = id++;
    s.token_ids = ids;
    s.attn = tensor_from_array(attn);
    trace.steps.push_back(std::move(s));
  }
  return trace;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "bottleneck-token audio-visual fusion core";
  m.attr("__version__") = "0.1.0";

  py::register_exception<ShapeError>(m, "ShapeError");
  py::register_exception<ConfigError>(m, "ConfigurationError");
  py::register_exception<UsageError>(m, "UsageError");
  py::register_exception<DataError>(m, "DataValueError");

  m.def(
      "ctc_nll",
      [](const py::array_t<double>& log_probs, const std::vector<int>& target) {
        return ctc_nll(tensor_from_array(log_probs), target).item();
      },
      py::arg("log_probs"), py::arg("target"),
      "CTC negative log-likelihood; log_probs rows are per-frame normalized, blank = 0");

  m.def(
      "ctc_prefix_score",
      [](const std::vector<int>& prefix, const py::array_t<double>& log_probs) {
        return ctc_prefix_score(prefix, tensor_from_array(log_probs));
      },
      py::arg("prefix"), py::arg("log_probs"));

  m.def("wer", &wer, py::arg("hyp"), py::arg("ref"));
  m.def("edit_distance", &edit_distance, py::arg("hyp"), py::arg("ref"));

  m.def(
      "rollout",
      [](const std::vector<std::pair<std::vector<int>, py::array_t<double>>>& steps, int n_audio,
         int n_video, int n_bottleneck) {
        return array_from_tensor(
            rollout(trace_from_steps(steps, n_audio, n_video, n_bottleneck)));
      },
      py::arg("steps"), py::arg("n_audio"), py::arg("n_video"), py::arg("n_bottleneck") = 0,
      "attention rollout over (token_ids, matrix) sub-steps in the global index space");

  m.def(
      "modality_influence",
      [](const py::array_t<double>& matrix, const std::vector<int>& audio_idx,
         const std::vector<int>& video_idx) {
        InfluenceRaw f = modality_influence(tensor_from_array(matrix), audio_idx, video_idx);
        return py::make_tuple(f.a_to_a, f.v_to_a, f.v_to_v, f.a_to_v);
      },
      py::arg("matrix"), py::arg("audio_idx"), py::arg("video_idx"));

  m.def(
      "normalized_influence",
      [](double a_to_a, double v_to_a, double v_to_v, double a_to_v) {
        InfluenceRaw f{a_to_a, v_to_a, v_to_v, a_to_v};
        auto [va, av] = normalized_influence(f);
        return py::make_tuple(va, av);
      },
      py::arg("a_to_a"), py::arg("v_to_a"), py::arg("v_to_v"), py::arg("a_to_v"));

  m.def(
      "attention_cost",
      [](int frames_per_modality, int bottleneck_len, const std::string& scheme, int dim) {
        CostReport r =
            attention_cost(frames_per_modality, bottleneck_len, attention_scheme_from(scheme), dim);
        py::dict d;
        d["scheme"] = to_string(r.scheme);
        d["F_m"] = r.frames_per_modality;
        d["F_b"] = r.bottleneck_len;
        d["dim"] = r.dim;
        d["formula_pairs"] = r.formula_pairs;
        d["measured_madds"] = r.measured_madds;
        return d;
      },
      py::arg("frames_per_modality"), py::arg("bottleneck_len"), py::arg("scheme"),
      py::arg("dim") = 4);

  m.def(
      "mix_at_snr",
      [](const py::array_t<double>& signal, const py::array_t<double>& noise, double snr_db) {
        return array_from_tensor(
            mix_at_snr(tensor_from_array(signal), tensor_from_array(noise), snr_db));
      },
      py::arg("signal"), py::arg("noise"), py::arg("snr_db"));

  m.def(
      "synth_noise",
      [](const std::string& kind, int length, int dim, std::uint64_t seed) {
        SyntheticTaskSpec spec;
        spec.audio_feat_dim = dim;
        TaskTemplates templates(spec);
        Rng rng(seed);
        return array_from_tensor(
            synth_noise(noise_kind_from(kind), length, dim, rng, templates));
      },
      py::arg("kind"), py::arg("length"), py::arg("dim"), py::arg("seed") = 0,
      "white | pink | babble (babble uses the default synthetic task templates)");

  py::class_<Model>(m, "Model")
      .def(py::init([](const py::dict& cfg, const std::string& variant) {
             return Model(config_from_dict(cfg), variant_from(variant));
           }),
           py::arg("config"), py::arg("variant") = "bottleneck")
      .def_property_readonly("num_params",
                             [](const Model& m_) { return m_.params().total_size(); })
      .def_property_readonly("variant",
                             [](const Model& m_) { return to_string(m_.variant()); })
      .def(
          "forward",
          [](const Model& model, const py::array_t<double>& audio,
             const py::array_t<double>& video) {
            EncoderOutput enc = model.encode(tensor_from_array(audio), tensor_from_array(video));
            return py::make_tuple(array_from_tensor(enc.audio), array_from_tensor(enc.video));
          },
          py::arg("audio"), py::arg("video"),
          "encode raw feature matrices; returns (audio_out, video_out)")
      .def(
          "influence",
          [](const Model& model, const py::array_t<double>& audio,
             const py::array_t<double>& video) {
            EncoderOutput enc = model.encode(tensor_from_array(audio), tensor_from_array(video));
            RolloutMatrix r = rollout(enc.trace);
            InfluenceRaw f = modality_influence(r, enc.trace.audio_ids(), enc.trace.video_ids());
            auto [va, av] = normalized_influence(f);
            return py::make_tuple(va, av);
          },
          py::arg("audio"), py::arg("video"),
          "normalized (video->audio, audio->video) rollout influence")
      .def(
          "decode",
          [](const Model& model, const py::array_t<double>& audio, const py::array_t<double>& video,
             int beam, double lam, int max_len) {
            EncodeOptions eopts;
            eopts.collect_trace = false;
            EncoderOutput enc =
                model.encode(tensor_from_array(audio), tensor_from_array(video), eopts);
            BeamOptions opts;
            opts.beam = beam;
            opts.lambda = lam;
            opts.max_len = max_len;
            return beam_search(model, enc.audio, model.ctc_log_probs_audio(enc.audio), opts).tokens;
          },
          py::arg("audio"), py::arg("video"), py::arg("beam") = 4, py::arg("lam") = 0.3,
          py::arg("max_len") = 16)
      .def("save", [](const Model& model, const std::string& path) { save_checkpoint(path, model); },
           py::arg("path"))
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); },
                  py::arg("path"));
}
