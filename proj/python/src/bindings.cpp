// Copyright 2026 The dcabird Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dca/augmentation.hpp"
#include "dca/dataset.hpp"
#include "dca/explain.hpp"
#include "dca/frontend.hpp"
#include "dca/metrics.hpp"
#include "dca/model.hpp"
#include "dca/normalization.hpp"
#include "dca/synth.hpp"
#include "dca/training.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace dca;

namespace {

Waveform to_waveform(const std::vector<float>& samples, int rate) {
  return Waveform{samples, rate};
}

MelSpectrogram to_mel(const MatrixF& values) {
  MelSpectrogram m;
  m.values = values;
  return m;
}

TrainConfig config_from(const py::dict& overrides) {
  TrainConfig cfg;
  for (auto item : overrides) {
    const std::string key = py::str(item.first);
    py::handle v = item.second;
    std::string text;
    if (py::isinstance<py::bool_>(v)) {
      text = v.cast<bool>() ? "true" : "false";
    } else if (py::isinstance<py::list>(v) || py::isinstance<py::tuple>(v)) {
      for (auto x : v) text += (text.empty() ? "" : ",") + std::string(py::str(x));
    } else {
      text = py::str(v);
    }
    set_config_value(cfg, key, text);
  }
  cfg.validate();
  return cfg;
}

Dataset load_dataset(const std::filesystem::path& manifest, const std::filesystem::path& cache,
                     bool waveforms) {
  DatasetOptions opt;
  opt.cache_dir = cache;
  opt.keep_waveforms = waveforms;
  return Dataset::load(read_manifest(manifest), opt);
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["uar"] = m.uar;
  d["macro_f1"] = m.macro_f1;
  d["confusion"] = m.confusion;
  d["total"] = m.total;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dialect-robust bird call classification core";

  // Later registrations are tried first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.attr("SAMPLE_RATE") = kSampleRate;
  m.attr("N_MELS") = kNumMels;
  m.attr("N_FRAMES") = kNumFrames;
  m.attr("N_SPECIES") = kNumSpecies;
  m.attr("N_REGIONS") = kNumRegions;
  m.attr("SYNTHETIC_WEIGHT") = kSyntheticWeight;

  // Audio and features.
  m.def(
      "read_wav",
      [](const std::filesystem::path& p) {
        Waveform w = read_wav(p);
        return py::make_tuple(py::array_t<float>(static_cast<py::ssize_t>(w.samples.size()),
                                                 w.samples.data()),
                              w.sample_rate);
      },
      py::arg("path"), "Returns (samples, sample_rate).");
  m.def(
      "write_wav",
      [](const std::filesystem::path& p, const std::vector<float>& samples, int rate) {
        write_wav(p, to_waveform(samples, rate));
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = kSampleRate);
  m.def(
      "log_mel",
      [](const std::vector<float>& samples, int rate) {
        return log_mel(to_waveform(samples, rate)).values;
      },
      py::arg("samples"), py::arg("sample_rate") = kSampleRate,
      "128 x frames natural-log Mel energies of 16 kHz audio.");
  m.def(
      "extract_features",
      [](const std::vector<float>& samples, int rate) {
        return extract_features(to_waveform(samples, rate)).values;
      },
      py::arg("samples"), py::arg("sample_rate") = kSampleRate,
      "Resample, pad/trim to 8 s, peak-normalise, then log-Mel (128 x 251).");
  m.def("hz_to_mel", &hz_to_mel);
  m.def("mel_to_hz", &mel_to_hz);

  // Normalizers.
  m.def(
      "normalize",
      [](const std::string& kind, const MatrixD& x, int frames, bool training, int group_size) {
        auto s = NormState<double>::create(parse_norm_kind(kind), static_cast<int>(x.rows()),
                                           group_size);
        return norm_forward(s, x, frames, training);
      },
      py::arg("kind"), py::arg("x"), py::arg("frames"), py::arg("training") = true,
      py::arg("group_size") = 16,
      "Freshly initialised normalizer (unit gamma, zero beta) applied to x, "
      "laid out bins x (batch * frames).");

  // Augmentation.
  m.def(
      "pitch_shift",
      [](const std::vector<float>& s, double semitones, int rate) {
        return pitch_shift(to_waveform(s, rate), semitones).samples;
      },
      py::arg("samples"), py::arg("semitones"), py::arg("sample_rate") = kSampleRate);
  m.def(
      "add_noise",
      [](const std::vector<float>& s, double snr_db, std::uint64_t seed, int rate) {
        Rng rng(seed);
        return add_noise(to_waveform(s, rate), snr_db, rng).samples;
      },
      py::arg("samples"), py::arg("snr_db"), py::arg("seed") = 0,
      py::arg("sample_rate") = kSampleRate);
  m.def(
      "dialect_transfer",
      [](const MatrixF& x, const std::vector<double>& src, const std::vector<double>& tgt) {
        Sample s;
        s.features = to_mel(x);
        return dialect_transfer(s, src, tgt, 0).features.values;
      },
      py::arg("features"), py::arg("ltas_src"), py::arg("ltas_tgt"));

  // Model.
  py::class_<ModelState<float>>(m, "Model")
      .def_static(
          "initialize",
          [](const std::string& norm, std::uint64_t seed, std::vector<int> channels,
             int embedding_dim) {
            Topology t;
            t.norm = parse_norm_kind(norm);
            if (!channels.empty()) {
              if (channels.size() != t.layers.size()) {
                throw ConfigError("channels needs one entry per TDNN layer");
              }
              for (std::size_t i = 0; i < channels.size(); ++i) t.layers[i].channels = channels[i];
            }
            t.embedding_dim = embedding_dim;
            t.validate();
            return ModelState<float>::initialize(t, seed);
          },
          py::arg("norm") = "ifn", py::arg("seed") = 0, py::arg("channels") = std::vector<int>{},
          py::arg("embedding_dim") = 64)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const ModelState<float>& s, const std::filesystem::path& p) { save_checkpoint(s, p); })
      .def("to_bytes",
           [](const ModelState<float>& s) {
             auto b = serialize_checkpoint(s);
             return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
           })
      .def_static("from_bytes",
                  [](const py::bytes& b) {
                    std::string s = b;
                    return deserialize_checkpoint(
                        {reinterpret_cast<const unsigned char*>(s.data()), s.size()});
                  })
      .def_property_readonly("topology", [](const ModelState<float>& s) { return s.topology.describe(); })
      .def_property_readonly("norm", [](const ModelState<float>& s) { return norm_kind_name(s.topology.norm); })
      .def(
          "forward",
          [](ModelState<float>& s, const std::vector<MatrixF>& batch) {
            if (batch.empty()) throw Error("forward: empty batch");
            const int frames = static_cast<int>(batch.front().cols());
            MatrixF x(batch.front().rows(), static_cast<Eigen::Index>(batch.size()) * frames);
            for (std::size_t b = 0; b < batch.size(); ++b) {
              if (batch[b].cols() != frames || batch[b].rows() != x.rows()) {
                throw Error("forward: all inputs must share one shape");
              }
              x.middleCols(static_cast<Eigen::Index>(b) * frames, frames) = batch[b];
            }
            ForwardResult<float> r = forward(s, x, frames, false);
            return py::make_tuple(MatrixF(r.species_logits.transpose()),
                                  MatrixF(r.domain_logits.transpose()));
          },
          py::arg("batch"), "Inference-mode (species_logits, domain_logits), one row per input.")
      .def(
          "predict",
          [](const ModelState<float>& s, const std::vector<MatrixF>& batch) {
            std::vector<MelSpectrogram> mels;
            for (const auto& b : batch) mels.push_back(to_mel(b));
            std::vector<const MelSpectrogram*> ptrs;
            for (const auto& x : mels) ptrs.push_back(&x);
            return predict(s, ptrs);
          },
          py::arg("batch"));

  // Training and evaluation.
  m.def("config_keys", &config_keys);
  m.def(
      "config_text", [](const py::dict& o) { return config_to_text(config_from(o)); },
      py::arg("overrides") = py::dict(), "Effective config text for the given key overrides.");
  m.def(
      "train",
      [](const std::filesystem::path& manifest, int region, const py::dict& overrides,
         const std::filesystem::path& cache) {
        TrainConfig cfg = config_from(overrides);
        Dataset data = load_dataset(manifest, cache, cfg.toggles.standard_aug);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(data, region, cfg);
        }
        py::list log;
        for (const EpochLog& e : r.log) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["loss"] = e.mean_loss;
          d["lambda"] = e.lambda;
          d["lr"] = e.lr;
          d["val_accuracy"] = e.val_accuracy;
          log.append(d);
        }
        return py::make_tuple(r.model, log);
      },
      py::arg("manifest"), py::arg("region"), py::arg("config") = py::dict(),
      py::arg("cache") = std::filesystem::path{}, "Returns (model, epoch_log).");
  m.def(
      "evaluate",
      [](const ModelState<float>& model, const std::filesystem::path& manifest, int region,
         const std::filesystem::path& cache) {
        Dataset data = load_dataset(manifest, cache, false);
        Metrics r;
        {
          py::gil_scoped_release release;
          r = evaluate(model, data, region);
        }
        return metrics_dict(r);
      },
      py::arg("model"), py::arg("manifest"), py::arg("region"),
      py::arg("cache") = std::filesystem::path{});
  m.def(
      "run_matrix",
      [](const std::filesystem::path& manifest, const py::dict& overrides, const std::string& variant,
         const std::filesystem::path& cache) {
        TrainConfig cfg = config_from(overrides);
        Dataset data = load_dataset(manifest, cache, cfg.toggles.standard_aug);
        Report rep;
        {
          py::gil_scoped_release release;
          rep = run_matrix(data, cfg, variant);
        }
        std::ostringstream os;
        rep.write(os);
        return os.str();
      },
      py::arg("manifest"), py::arg("config") = py::dict(), py::arg("variant") = "",
      py::arg("cache") = std::filesystem::path{}, "Report CSV text.");
  m.def(
      "compute_metrics",
      [](const std::vector<int>& truth, const std::vector<int>& pred, int n) {
        return metrics_dict(compute_metrics(truth, pred, n));
      },
      py::arg("truth"), py::arg("predicted"), py::arg("n_classes") = kNumSpecies);
  m.def(
      "loss",
      [](const MatrixD& species_logits, const MatrixD& domain_logits, const std::vector<int>& species,
         const std::vector<int>& regions, std::vector<double> weights, double alpha) {
        const std::size_t n = species.size();
        if (regions.size() != n) throw Error("loss: species and regions differ in length");
        if (weights.empty()) weights.assign(n, 1.0);
        if (weights.size() != n) throw Error("loss: weights length mismatch");
        std::vector<LossTarget> t(n);
        for (std::size_t i = 0; i < n; ++i) {
          t[i].species_dist.assign(static_cast<std::size_t>(species_logits.cols()), 0.0);
          t[i].species_dist.at(static_cast<std::size_t>(species[i])) = 1.0;
          t[i].region = regions[i];
          t[i].weight = weights[i];
        }
        const MatrixD sp = species_logits.transpose();
        const MatrixD dom = domain_logits.transpose();
        auto r = weighted_loss<double>(t, sp, dom, alpha);
        py::dict d;
        d["total"] = r.total;
        d["species_term"] = r.species_term;
        d["domain_term"] = r.domain_term;
        d["species_ce"] = r.species_ce;
        d["domain_ce"] = r.domain_ce;
        return d;
      },
      py::arg("species_logits"), py::arg("domain_logits"), py::arg("species"),
      py::arg("regions"), py::arg("weights") = std::vector<double>{}, py::arg("alpha") = 0.5,
      "Weighted species + alpha domain cross-entropy; logits have one row per sample.");

  // Corpus.
  m.def(
      "generate_corpus",
      [](const std::filesystem::path& out, int clips_per_cell, std::uint64_t seed,
         std::vector<int> scarce, int n_species) {
        SynthConfig cfg;
        cfg.clips_per_cell = clips_per_cell;
        cfg.seed = seed;
        cfg.scarce_species = std::move(scarce);
        cfg.n_species = n_species;
        cfg.validate();
        Manifest man;
        {
          py::gil_scoped_release release;
          man = generate_corpus(cfg, out);
        }
        return static_cast<int>(man.entries.size());
      },
      py::arg("out_dir"), py::arg("clips_per_cell") = 20, py::arg("seed") = 0,
      py::arg("scarce_species") = std::vector<int>{1, 3, 6, 8}, py::arg("n_species") = kNumSpecies,
      "Writes the corpus and manifest.csv; returns the clip count.");
  m.def(
      "region_ltas",
      [](const std::filesystem::path& manifest, int region) {
        return manifest_ltas(read_manifest(manifest), region);
      },
      py::arg("manifest"), py::arg("region"));

  // Explanations.
  m.def(
      "grad_cam",
      [](const ModelState<float>& model, const MatrixF& x, int target) {
        ModelScorer scorer(model);
        return grad_cam(scorer, to_mel(x), target).values;
      },
      py::arg("model"), py::arg("features"), py::arg("target_class"));
  m.def(
      "lime",
      [](const ModelState<float>& model, const MatrixF& x, int target, int n_perturbations,
         std::uint64_t seed) {
        ModelScorer scorer(model);
        LimeConfig cfg;
        cfg.n_perturbations = n_perturbations;
        cfg.rng_seed = seed;
        LimeResult r;
        {
          py::gil_scoped_release release;
          r = lime(scorer, to_mel(x), target, cfg);
        }
        return py::make_tuple(r.weights, r.map.values);
      },
      py::arg("model"), py::arg("features"), py::arg("target_class"),
      py::arg("n_perturbations") = 1000, py::arg("seed") = 0, "Returns (tile_weights, map).");
  m.def(
      "saliency_overlap",
      [](const MatrixD& a, const MatrixD& b) {
        SaliencyMap x, y;
        x.values = a;
        y.values = b;
        return saliency_overlap(x, y);
      },
      py::arg("a"), py::arg("b"));
}
