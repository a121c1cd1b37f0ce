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

// Command-line front end: synth, preprocess, train, eval, matrix, ablation,
// transfer and explain.

#include "dca/dataset.hpp"
#include "dca/explain.hpp"
#include "dca/synth.hpp"
#include "dca/tensor_io.hpp"
#include "dca/training.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

// Flags shared by train, matrix and ablation. Each maps to a config key.
struct TrainFlags {
  std::string manifest;
  std::string config_file;
  std::string cache_dir;
  std::vector<std::string> sets;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, bool> toggles;
  std::map<std::string, CLI::Option*> toggle_options;

  void add(CLI::App* app, bool with_repeats) {
    app->add_option("--manifest", manifest, "Manifest CSV")->required();
    app->add_option("--config", config_file, "Flat key = value config file");
    app->add_option("--cache", cache_dir, "Feature cache directory");
    app->add_option("--set", sets, "Override any config key (key=value), repeatable");
    auto value = [&](const std::string& flag, const std::string& key, const std::string& help) {
      options[key] = app->add_option(flag, values[key], help);
    };
    value("--norm", "norm", "Normalizer: bn, gw, tn, ifn, rifn");
    value("--seed", "seed", "Random seed");
    value("--epochs", "epochs", "Training epochs");
    value("--batch-size", "batch_size", "Labeled clips per step");
    value("--lr", "lr", "Initial learning rate");
    value("--lr-min", "lr_min", "Final learning rate");
    value("--momentum", "momentum", "SGD momentum (adam: first-moment decay)");
    value("--optimizer", "optimizer", "sgd or adam");
    value("--alpha", "alpha_domain", "Domain loss weight");
    value("--w-syn", "w_syn", "Weight of synthetic samples");
    value("--channels", "tdnn_channels", "TDNN channels per layer (comma list)");
    value("--embedding", "embedding_dim", "Embedding size");
    value("--transfer-species", "transfer_species", "Species to transfer (comma list)");
    value("--transfer-source", "transfer_source_region", "Source region for transfer");
    if (with_repeats) value("--repeats", "repeats", "Runs per cell");
    auto toggle = [&](const std::string& flag, const std::string& key, const std::string& help) {
      toggle_options[key] = app->add_flag(flag, toggles[key], help);
    };
    toggle("--aug", "aug", "Standard augmentation");
    toggle("--grl", "grl", "Gradient reversal domain adversary");
    toggle("--mixup", "mixup", "Mixup");
    toggle("--transfer", "transfer", "Dialect transfer");
  }

  dca::TrainConfig config() const {
    dca::TrainConfig cfg;
    if (!config_file.empty()) dca::apply_config_file(cfg, config_file);
    for (const auto& [key, opt] : options) {
      if (opt->count() > 0) dca::set_config_value(cfg, key, values.at(key));
    }
    for (const auto& [key, opt] : toggle_options) {
      if (opt->count() > 0) dca::set_config_value(cfg, key, toggles.at(key) ? "true" : "false");
    }
    for (const std::string& kv : sets) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw dca::ConfigError("--set expects key=value, got " + kv);
      dca::set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
  }

  dca::Dataset load(const dca::TrainConfig& cfg, bool keep_waveforms) const {
    dca::DatasetOptions opt;
    opt.cache_dir = cache_dir;
    opt.keep_waveforms = keep_waveforms;
    opt.test_stride = cfg.test_stride;
    return dca::Dataset::load(dca::read_manifest(manifest), opt);
  }
};

void echo_config(const dca::TrainConfig& cfg, const fs::path& dir) {
  if (!dir.empty()) fs::create_directories(dir);
  fs::path p = dir / "effective_config.txt";
  std::ofstream out(p);
  if (!out) throw dca::IoError("cannot write " + p.string());
  out << dca::config_to_text(cfg);
}

std::string metrics_line(int region, const dca::Metrics& m) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << "region=" << region << " acc=" << m.accuracy
     << " uar=" << m.uar << " macro_f1=" << m.macro_f1 << " n=" << m.total;
  return os.str();
}

std::vector<int> parse_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = std::stoi(item, &used);
    if (used != item.size()) throw dca::ConfigError("bad list item '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void progress(const std::string& msg) { std::cerr << msg << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dialect-robust bird call classification toolkit"};
  app.require_subcommand(1, 1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate the synthetic three-region corpus");
  std::string synth_out;
  int synth_clips = 20;
  std::uint64_t synth_seed = 0;
  std::string synth_scarce = "1,3,6,8";
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--clips", synth_clips, "Clips per (species, region) cell");
  synth->add_option("--seed", synth_seed, "Random seed");
  synth->add_option("--scarce", synth_scarce, "Scarce species in region 1 (comma list)");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Compute log-Mel features for a manifest");
  std::string pre_manifest, pre_out;
  pre->add_option("--manifest", pre_manifest, "Manifest CSV")->required();
  pre->add_option("--out", pre_out, "Output directory for .melx files")->required();

  // train
  auto* train = app.add_subcommand("train", "Train one model on one region");
  TrainFlags train_flags;
  train_flags.add(train, false);
  int train_region = 0;
  std::string train_out;
  train->add_option("--region", train_region, "Training region")->required();
  train->add_option("--out", train_out, "Checkpoint path")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one region");
  std::string eval_ckpt, eval_manifest, eval_cache, eval_split = "test";
  int eval_region = 0;
  eval->add_option("--ckpt", eval_ckpt, "Checkpoint")->required();
  eval->add_option("--manifest", eval_manifest, "Manifest CSV")->required();
  eval->add_option("--region", eval_region, "Test region")->required();
  eval->add_option("--cache", eval_cache, "Feature cache directory");
  eval->add_option("--split", eval_split, "test or train")->check(CLI::IsMember({"test", "train"}));

  // matrix
  auto* matrix = app.add_subcommand("matrix", "Train on each region, test on every region");
  TrainFlags matrix_flags;
  matrix_flags.add(matrix, true);
  std::string matrix_out, matrix_variant;
  matrix->add_option("--out", matrix_out, "Report path");
  matrix->add_option("--variant", matrix_variant, "Variant name in the report");

  // ablation
  auto* ablation = app.add_subcommand("ablation", "Run the five-stage ablation ladder");
  TrainFlags ablation_flags;
  ablation_flags.add(ablation, true);
  std::string ablation_out;
  int ablation_region = -1;
  ablation->add_option("--out", ablation_out, "Report path");
  ablation->add_option("--region", ablation_region, "Training region (default: fewest clips)");

  // transfer
  auto* transfer = app.add_subcommand("transfer", "Write LTAS dialect-transferred samples");
  std::string tr_manifest, tr_out, tr_species, tr_cache;
  int tr_src = 0, tr_tgt = 1;
  double tr_wsyn = dca::kSyntheticWeight;
  transfer->add_option("--manifest", tr_manifest, "Manifest CSV")->required();
  transfer->add_option("--src-region", tr_src, "Source region")->required();
  transfer->add_option("--tgt-region", tr_tgt, "Target region")->required();
  transfer->add_option("--species", tr_species, "Species to transfer (comma list)")->required();
  transfer->add_option("--out", tr_out, "Output directory")->required();
  transfer->add_option("--w-syn", tr_wsyn, "Weight of the synthetic entries");
  transfer->add_option("--cache", tr_cache, "Feature cache directory");

  // explain
  auto* explain = app.add_subcommand("explain", "Grad-CAM or LIME saliency for one clip");
  std::string ex_ckpt, ex_wav, ex_method = "gradcam", ex_out;
  int ex_class = -1;
  std::uint64_t ex_seed = 0;
  int ex_perturb = 1000;
  explain->add_option("--ckpt", ex_ckpt, "Checkpoint")->required();
  explain->add_option("--wav", ex_wav, "Audio file")->required();
  explain->add_option("--method", ex_method, "gradcam or lime")
      ->check(CLI::IsMember({"gradcam", "lime"}));
  explain->add_option("--class", ex_class, "Target species (default: predicted)");
  explain->add_option("--out", ex_out, "Output directory")->required();
  explain->add_option("--seed", ex_seed, "LIME seed");
  explain->add_option("--perturbations", ex_perturb, "LIME perturbations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) {
      dca::SynthConfig cfg;
      cfg.clips_per_cell = synth_clips;
      cfg.seed = synth_seed;
      cfg.scarce_species = parse_list(synth_scarce);
      dca::Manifest m = dca::generate_corpus(cfg, synth_out);
      std::cout << "wrote " << m.entries.size() << " clips and "
                << (fs::path(synth_out) / "manifest.csv").string() << "\n";
    } else if (*pre) {
      dca::Manifest m = dca::read_manifest(pre_manifest);
      fs::create_directories(pre_out);
      dca::Manifest out;
      out.base_dir = pre_out;
      out.entries = m.entries;
      std::vector<std::string> names(m.entries.size());
      dca::parallel_for(static_cast<int>(m.entries.size()), [&](int i) {
        fs::path src = m.resolve(m.entries[i]);
        if (src.extension() == ".melx") {
          names[i] = fs::absolute(src).string();
          return;
        }
        // The cache writes <content hash>.melx into the output directory.
        dca::cached_features(src, pre_out);
        names[i] = dca::file_hash(src) + ".melx";
      });
      for (std::size_t i = 0; i < names.size(); ++i) out.entries[i].path = names[i];
      dca::write_manifest(fs::path(pre_out) / "manifest.csv", out);
      std::cout << "wrote features for " << out.entries.size() << " clips and "
                << (fs::path(pre_out) / "manifest.csv").string() << "\n";
    } else if (*train) {
      dca::TrainConfig cfg = train_flags.config();
      fs::path out = train_out;
      echo_config(cfg, out.parent_path());
      dca::Dataset data = train_flags.load(cfg, cfg.toggles.standard_aug);
      dca::TrainResult r = dca::train(data, train_region, cfg, &std::cerr);
      dca::save_checkpoint(r.model, out);
      std::cout << "saved " << out.string() << "\n";
    } else if (*eval) {
      dca::ModelState<float> model = dca::load_checkpoint(eval_ckpt);
      dca::DatasetOptions opt;
      opt.cache_dir = eval_cache;
      opt.keep_waveforms = false;
      dca::Dataset data = dca::Dataset::load(dca::read_manifest(eval_manifest), opt);
      dca::Split split = eval_split == "train" ? dca::Split::kTrain : dca::Split::kTest;
      std::cout << metrics_line(eval_region, dca::evaluate(model, data, eval_region, split))
                << "\n";
    } else if (*matrix) {
      dca::TrainConfig cfg = matrix_flags.config();
      if (!matrix_out.empty()) echo_config(cfg, fs::path(matrix_out).parent_path());
      dca::Dataset data = matrix_flags.load(cfg, cfg.toggles.standard_aug);
      dca::Report report = dca::run_matrix(data, cfg, matrix_variant, {}, progress);
      if (!matrix_out.empty()) report.write(fs::path(matrix_out));
      else report.write(std::cout);
      std::cout << report.table();
    } else if (*ablation) {
      dca::TrainConfig cfg = ablation_flags.config();
      if (!ablation_out.empty()) echo_config(cfg, fs::path(ablation_out).parent_path());
      dca::Dataset data = ablation_flags.load(cfg, true);
      dca::Report report = dca::run_ablation(data, cfg, ablation_region, progress);
      if (!ablation_out.empty()) report.write(fs::path(ablation_out));
      else report.write(std::cout);
      std::cout << report.table();
    } else if (*transfer) {
      dca::Manifest m = dca::read_manifest(tr_manifest);
      dca::DatasetOptions opt;
      opt.cache_dir = tr_cache;
      opt.keep_waveforms = false;
      dca::Dataset data = dca::Dataset::load(m, opt);
      std::vector<int> species = parse_list(tr_species);
      dca::Dataset extended = dca::with_dialect_transfer(data, tr_src, tr_tgt, species, tr_wsyn);
      fs::create_directories(tr_out);
      dca::Manifest out;
      out.base_dir = tr_out;
      for (const dca::ManifestEntry& e : m.entries) {
        dca::ManifestEntry copy = e;
        copy.path = fs::absolute(m.resolve(e)).string();
        out.entries.push_back(copy);
      }
      for (std::size_t i = data.clips.size(); i < extended.clips.size(); ++i) {
        const dca::Clip& c = extended.clips[i];
        dca::write_tensor(fs::path(tr_out) / c.entry.path, c.features.values);
        out.entries.push_back(c.entry);
      }
      dca::write_manifest(fs::path(tr_out) / "manifest.csv", out);
      std::cout << "wrote " << (extended.clips.size() - data.clips.size())
                << " transferred entries and " << (fs::path(tr_out) / "manifest.csv").string()
                << "\n";
    } else if (*explain) {
      dca::ModelState<float> model = dca::load_checkpoint(ex_ckpt);
      dca::MelSpectrogram x = dca::extract_features(dca::read_wav(ex_wav));
      dca::ModelScorer scorer(model);
      int target = ex_class >= 0 ? ex_class : scorer.predict(x.values);
      if (target >= scorer.n_classes()) throw dca::ConfigError("--class out of range");
      fs::create_directories(ex_out);
      fs::path out = ex_out;
      dca::SaliencyMap map;
      if (ex_method == "gradcam") {
        map = dca::grad_cam(scorer, x, target);
      } else {
        dca::LimeConfig lc;
        lc.rng_seed = ex_seed;
        lc.n_perturbations = ex_perturb;
        dca::LimeResult r = dca::lime(scorer, x, target, lc);
        dca::write_tile_weights(out / "lime_tiles.csv", r);
        map = r.map;
      }
      dca::render(map, x, out / (ex_method + "_map.pgm"), out / (ex_method + "_overlay.pgm"));
      std::cout << "method=" << ex_method << " class=" << target << " wrote "
                << (out / (ex_method + "_map.pgm")).string() << "\n";
    }
  } catch (const dca::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
