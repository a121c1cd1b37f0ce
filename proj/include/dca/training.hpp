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

#pragma once

#include "dca/augmentation.hpp"
#include "dca/dataset.hpp"
#include "dca/metrics.hpp"
#include "dca/model.hpp"

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dca {

struct TrainToggles {
  bool standard_aug = false;
  bool grl = false;
  bool mixup = false;
  bool dialect_transfer = false;
};

enum class Optimizer { kSgd, kAdam };

Optimizer parse_optimizer(const std::string& name);
const char* optimizer_name(Optimizer o);

struct TrainConfig {
  double alpha_domain = 0.5;
  double w_syn = kSyntheticWeight;
  int epochs = 40;
  int batch_size = 32;
  Optimizer optimizer = Optimizer::kSgd;
  // SGD momentum; the first-moment decay for adam.
  double momentum = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr = 0.01;
  // Cosine decay floor; clamped to lr so lr = 0 freezes the model.
  double lr_min = 1e-4;
  // Decoupled decay of weight matrices (not biases or normalizer affine).
  double weight_decay = 0.0;
  // Learning-rate multiplier for the domain head.
  double domain_lr_scale = 1.0;
  GrlSchedule grl_schedule;
  NormKind norm_kind = NormKind::kIfn;
  TrainToggles toggles;
  std::uint64_t seed = 0;
  int repeats = 5;
  AugmentConfig augment;
  // norm/group_size are taken from norm_kind/group_size below.
  Topology topology;
  int group_size = 16;
  double val_fraction = 0.1;
  // With grl on: unlabeled clips from the other regions added to each step.
  int domain_batch = 16;
  // Cuts the domain gradient into the extractor while still training the
  // domain head (reference path for the alpha = 0 property).
  bool detach_domain = false;
  // With grl on: extra domain-head descent steps per batch on the detached
  // embeddings before the joint update, so the extractor faces a head close
  // to its best response. The step is 1/L for the head's curvature bound.
  int domain_steps = 20;
  int transfer_source_region = 0;
  // Species to transfer; empty selects the training region's scarce species.
  std::vector<int> transfer_species;
  int test_stride = 4;

  Topology effective_topology() const;
  void validate() const;
};

// Flat `key = value` config text ('#' starts a comment).
void apply_config_text(TrainConfig& cfg, const std::string& text);
void apply_config_file(TrainConfig& cfg, const std::filesystem::path& path);
// Sets one field by its config key; throws ConfigError on unknown keys.
void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value);
std::string config_to_text(const TrainConfig& cfg);
std::vector<std::string> config_keys();

struct LossTarget {
  std::vector<double> species_dist;
  int region = 0;
  double weight = 1.0;
};

template <typename S>
struct LossResult {
  double total = 0.0;
  double species_term = 0.0;  // (1/N) sum w_i CE_sp
  double domain_term = 0.0;   // (1/N) sum CE_dom (before alpha)
  std::vector<double> species_ce;
  std::vector<double> domain_ce;
  Matrix<S> species_grad;
  Matrix<S> domain_grad;
};

// L = (1/N) sum_i [ w_i CE(softmax(s_i), y_i) + alpha CE(softmax(d_i), r_i) ],
// with soft species targets allowed.
template <typename S>
LossResult<S> weighted_loss(std::span<const LossTarget> targets, const Matrix<S>& species_logits,
                       const Matrix<S>& domain_logits, double alpha);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  double lambda = 0.0;
  double lr = 0.0;
  double val_accuracy = 0.0;
  int val_count = 0;
};

struct TrainResult {
  ModelState<float> model;
  std::vector<EpochLog> log;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

TrainResult train(const Dataset& data, int train_region, const TrainConfig& cfg,
                  std::ostream* log = nullptr);

// Argmax species predictions, batched, eval mode.
std::vector<int> predict(const ModelState<float>& model,
                         std::span<const MelSpectrogram* const> features);

Metrics evaluate(const ModelState<float>& model, const Dataset& data, int test_region,
                 Split split = Split::kTest);

// Species of `region` whose real training-clip count is below half the median.
std::vector<int> scarce_species(const Dataset& data, int region);
int lowest_resource_region(const Dataset& data);

// Appends LTAS-transferred copies of the source region's training clips of
// the given species, restyled to the target region.
Dataset with_dialect_transfer(const Dataset& data, int source_region, int target_region,
                              std::span<const int> species, double w_syn);

// LTAS over a region's real training clips.
std::vector<double> region_ltas(const Dataset& data, int region);

struct ReportRecord {
  int train_region = 0;
  int test_region = 0;
  std::string variant;
  std::uint64_t seed = 0;
  Metrics metrics;
};

struct CellSummary {
  int train_region = 0;
  int test_region = 0;
  std::string variant;
  MeanStd accuracy, uar, macro_f1;
  int runs = 0;
};

struct Report {
  std::vector<ReportRecord> records;

  // One summary per (variant, train, test), in first-seen order.
  std::vector<CellSummary> summarize() const;
  // Line records `train_region,test_region,variant,seed,acc,uar,macro_f1`
  // followed by a `# summary` block.
  void write(std::ostream& out) const;
  void write(const std::filesystem::path& path) const;
  std::string table() const;
};

using ModelCallback =
    std::function<void(int train_region, std::uint64_t seed, const ModelState<float>& model)>;
using ProgressCallback = std::function<void(const std::string&)>;

// Trains `repeats` models (seeds seed..seed+repeats-1) per region and
// evaluates each on every region's test split.
Report run_matrix(const Dataset& data, const TrainConfig& cfg, const std::string& variant = "",
                  const ModelCallback& on_model = {}, const ProgressCallback& progress = {});

struct AblationStage {
  std::string name;
  TrainConfig config;
};

// baseline, +aug, +grl, +mixup, +transfer; each stage flips one toggle.
std::vector<AblationStage> ablation_ladder(const TrainConfig& base);

// Runs the ladder on the lowest-resource region (or `train_region` if >= 0).
Report run_ablation(const Dataset& data, const TrainConfig& cfg, int train_region = -1,
                    const ProgressCallback& progress = {});

}  // namespace dca
