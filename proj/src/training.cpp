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

#include "dca/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>

namespace dca {
namespace {

// A training example before augmentation.
struct Item {
  const MelSpectrogram* features = nullptr;
  const Waveform* waveform = nullptr;
  int species = 0;
  int region = 0;
  double weight = 1.0;
  bool synthetic = false;
};

Sample prepare(const Item& item, const TrainConfig& cfg, Rng& rng) {
  Sample s;
  s.species = item.species;
  s.region = item.region;
  s.weight = item.weight;
  s.synthetic = item.synthetic;
  if (!cfg.toggles.standard_aug) {
    s.features = *item.features;
    return s;
  }
  const AugmentConfig& a = cfg.augment;
  if (item.waveform != nullptr) {
    Waveform w = *item.waveform;
    bool changed = false;
    if (rng.bernoulli(a.apply_prob)) {
      w = pitch_shift(w, rng.uniform(-a.pitch_semitone_range, a.pitch_semitone_range));
      changed = true;
    }
    if (rng.bernoulli(a.apply_prob)) {
      w = time_shift(w, rng.uniform(-a.time_shift_range_s, a.time_shift_range_s));
      changed = true;
    }
    if (rng.bernoulli(a.apply_prob)) {
      w = add_noise(w, rng.uniform(a.noise_snr_db_min, a.noise_snr_db_max), rng);
      changed = true;
    }
    s.features = changed ? extract_features(w) : *item.features;
  } else {
    s.features = *item.features;
  }
  if (rng.bernoulli(a.apply_prob)) s.features = spec_augment(s.features, a, rng);
  return s;
}

double cosine_lr(const TrainConfig& cfg, long step, long total) {
  double lo = std::min(cfg.lr_min, cfg.lr);
  if (total <= 0) return cfg.lr;
  double progress = static_cast<double>(step) / static_cast<double>(total);
  return lo + 0.5 * (cfg.lr - lo) * (1.0 + std::cos(std::numbers::pi * progress));
}

MatrixF stack(std::span<const MelSpectrogram* const> feats, int frames) {
  MatrixF x(feats.front()->n_mels(), static_cast<Eigen::Index>(feats.size()) * frames);
  for (std::size_t b = 0; b < feats.size(); ++b) {
    if (feats[b]->n_frames() != frames || feats[b]->n_mels() != x.rows()) {
      throw Error("inconsistent feature shapes within a batch");
    }
    x.middleCols(static_cast<Eigen::Index>(b) * frames, frames) = feats[b]->values;
  }
  return x;
}

std::vector<const MelSpectrogram*> real_train_features(const Dataset& data, int region) {
  std::vector<const MelSpectrogram*> out;
  for (int i : data.select(region, Split::kTrain, false)) out.push_back(&data.clips[i].features);
  return out;
}

// Transferred copies kept alongside the items that point into them.
std::vector<Sample> transfer_samples(const Dataset& data, int source_region, int target_region,
                                     std::span<const int> species, double w_syn) {
  std::vector<Sample> out;
  if (source_region == target_region || species.empty()) return out;
  auto src_feats = real_train_features(data, source_region);
  auto tgt_feats = real_train_features(data, target_region);
  if (src_feats.empty() || tgt_feats.empty()) return out;
  std::vector<double> ltas_src = ltas(src_feats);
  std::vector<double> ltas_tgt = ltas(tgt_feats);
  for (int i : data.select(source_region, Split::kTrain, false)) {
    const Clip& c = data.clips[i];
    if (std::find(species.begin(), species.end(), c.entry.species) == species.end()) continue;
    Sample s;
    s.features = c.features;
    s.species = c.entry.species;
    s.region = c.entry.region;
    out.push_back(dialect_transfer(s, ltas_src, ltas_tgt, target_region, w_syn));
  }
  return out;
}

// Gradient descent on the domain head alone, embeddings held fixed. The
// softmax cross-entropy Hessian has norm at most 1/2 per sample, so
// L = (alpha / 2N) * sum(|e|^2 + 1) bounds the curvature and 1/L never
// increases the domain term.
void refit_domain_head(AffineLayer<float>& head, const MatrixF& embedding,
                       std::span<const LossTarget> targets, double alpha, int steps) {
  const Eigen::Index n = embedding.cols();
  if (n == 0 || alpha <= 0.0) return;
  const MatrixD e = embedding.cast<double>();
  const double scale = alpha / static_cast<double>(n);
  const double curvature = 0.5 * scale * (e.squaredNorm() + static_cast<double>(n));
  if (!(curvature > 0.0)) return;
  const double step = 1.0 / curvature;
  MatrixD w = head.weight.cast<double>();
  Eigen::VectorXd b = head.bias.cast<double>();
  MatrixD g(w.rows(), n);
  for (int it = 0; it < steps; ++it) {
    const MatrixD logits = (w * e).colwise() + b;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::VectorXd p = (logits.col(i).array() - logits.col(i).maxCoeff()).exp();
      p /= p.sum();
      p[targets[i].region] -= 1.0;
      g.col(i) = scale * p;
    }
    w -= step * g * e.transpose();
    b -= step * g.rowwise().sum();
  }
  head.weight = w.cast<float>();
  head.bias = b.cast<float>();
}

}  // namespace

template <typename S>
LossResult<S> weighted_loss(std::span<const LossTarget> targets, const Matrix<S>& species_logits,
                       const Matrix<S>& domain_logits, double alpha) {
  const Eigen::Index n = static_cast<Eigen::Index>(targets.size());
  if (n == 0) throw Error("loss: empty batch");
  if (species_logits.cols() != n || domain_logits.cols() != n) {
    throw Error("loss: logits do not match the batch size");
  }
  LossResult<S> r;
  r.species_ce.resize(n);
  r.domain_ce.resize(n);
  r.species_grad = Matrix<S>::Zero(species_logits.rows(), n);
  r.domain_grad = Matrix<S>::Zero(domain_logits.rows(), n);
  const double inv_n = 1.0 / static_cast<double>(n);

  auto log_softmax = [](const auto& col) {
    Eigen::VectorXd z = col.template cast<double>();
    double m = z.maxCoeff();
    double lse = m + std::log((z.array() - m).exp().sum());
    return Eigen::VectorXd(z.array() - lse);
  };

  for (Eigen::Index i = 0; i < n; ++i) {
    const LossTarget& t = targets[i];
    if (static_cast<Eigen::Index>(t.species_dist.size()) != species_logits.rows()) {
      throw Error("loss: label distribution size mismatch");
    }
    if (t.region < 0 || t.region >= domain_logits.rows()) throw Error("loss: region out of range");
    Eigen::VectorXd ls = log_softmax(species_logits.col(i));
    double ce = 0.0;
    double mass = 0.0;
    for (Eigen::Index k = 0; k < ls.size(); ++k) {
      ce -= t.species_dist[k] * ls[k];
      mass += t.species_dist[k];
    }
    r.species_ce[i] = ce;
    for (Eigen::Index k = 0; k < ls.size(); ++k) {
      double g = std::exp(ls[k]) * mass - t.species_dist[k];
      r.species_grad(k, i) = static_cast<S>(t.weight * inv_n * g);
    }
    Eigen::VectorXd ld = log_softmax(domain_logits.col(i));
    r.domain_ce[i] = -ld[t.region];
    for (Eigen::Index k = 0; k < ld.size(); ++k) {
      double g = std::exp(ld[k]) - (k == t.region ? 1.0 : 0.0);
      r.domain_grad(k, i) = static_cast<S>(alpha * inv_n * g);
    }
    r.species_term += t.weight * ce;
    r.domain_term += r.domain_ce[i];
  }
  r.species_term *= inv_n;
  r.domain_term *= inv_n;
  r.total = r.species_term + alpha * r.domain_term;
  return r;
}

template LossResult<float> weighted_loss<float>(std::span<const LossTarget>, const MatrixF&,
                                           const MatrixF&, double);
template LossResult<double> weighted_loss<double>(std::span<const LossTarget>, const MatrixD&,
                                             const MatrixD&, double);

std::vector<int> scarce_species(const Dataset& data, int region) {
  std::vector<int> counts(kNumSpecies, 0);
  for (int i : data.select(region, Split::kTrain, false)) {
    int s = data.clips[i].entry.species;
    if (s >= static_cast<int>(counts.size())) counts.resize(s + 1, 0);
    ++counts[s];
  }
  std::vector<int> sorted = counts;
  std::sort(sorted.begin(), sorted.end());
  double median = sorted.size() % 2 == 1
                      ? sorted[sorted.size() / 2]
                      : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  std::vector<int> out;
  for (int s = 0; s < static_cast<int>(counts.size()); ++s) {
    if (counts[s] < 0.5 * median) out.push_back(s);
  }
  return out;
}

int lowest_resource_region(const Dataset& data) {
  std::vector<int> regions = data.regions();
  if (regions.empty()) throw Error("dataset has no real clips");
  int best = regions.front();
  for (int r : regions) {
    if (data.count_real(r) < data.count_real(best)) best = r;
  }
  return best;
}

std::vector<double> region_ltas(const Dataset& data, int region) {
  auto feats = real_train_features(data, region);
  if (feats.empty()) throw Error("region " + std::to_string(region) + " has no training clips");
  return ltas(feats);
}

Dataset with_dialect_transfer(const Dataset& data, int source_region, int target_region,
                              std::span<const int> species, double w_syn) {
  Dataset out = data;
  for (Sample& s : transfer_samples(data, source_region, target_region, species, w_syn)) {
    Clip c;
    c.entry.species = s.species;
    c.entry.region = s.region;
    c.entry.synthetic = true;
    c.entry.weight = s.weight;
    c.split = Split::kTrain;
    c.features = std::move(s.features);
    out.clips.push_back(std::move(c));
  }
  // Paths for the new clips follow the source order.
  int k = 0;
  for (std::size_t i = data.clips.size(); i < out.clips.size(); ++i) {
    std::ostringstream name;
    name << "transfer_r" << source_region << "_to_r" << target_region << "_" << std::setw(4)
         << std::setfill('0') << k++ << "_s" << out.clips[i].entry.species << ".melx";
    out.clips[i].entry.path = name.str();
  }
  return out;
}

std::vector<int> predict(const ModelState<float>& model,
                         std::span<const MelSpectrogram* const> features) {
  std::vector<int> out;
  out.reserve(features.size());
  if (features.empty()) return out;
  ModelState<float> m = model;
  constexpr std::size_t kChunk = 32;
  for (std::size_t start = 0; start < features.size(); start += kChunk) {
    std::size_t len = std::min(kChunk, features.size() - start);
    auto part = features.subspan(start, len);
    int frames = part.front()->n_frames();
    ForwardResult<float> r = forward(m, stack(part, frames), frames, false);
    for (Eigen::Index b = 0; b < r.species_logits.cols(); ++b) {
      Eigen::Index arg = 0;
      r.species_logits.col(b).maxCoeff(&arg);
      out.push_back(static_cast<int>(arg));
    }
  }
  return out;
}

Metrics evaluate(const ModelState<float>& model, const Dataset& data, int test_region,
                 Split split) {
  // Manifests always use the fixed 10-species, 3-region label space.
  check_label_space(model.topology, kNumSpecies, kNumRegions);
  std::vector<int> idx = data.select(test_region, split, false);
  if (idx.empty()) {
    throw Error("region " + std::to_string(test_region) + " has no evaluation clips");
  }
  std::vector<const MelSpectrogram*> feats;
  std::vector<int> truth;
  for (int i : idx) {
    feats.push_back(&data.clips[i].features);
    truth.push_back(data.clips[i].entry.species);
  }
  std::vector<int> pred = predict(model, feats);
  return compute_metrics(truth, pred, model.topology.n_species);
}

TrainResult train(const Dataset& data, int train_region, const TrainConfig& cfg,
                  std::ostream* log) {
  cfg.validate();
  const Topology topo = cfg.effective_topology();
  std::vector<int> region_idx = data.select(train_region, Split::kTrain, true);
  if (data.select(train_region, Split::kTrain, false).empty()) {
    throw Error("training region " + std::to_string(train_region) + " has no training clips");
  }

  // Stratified validation holdout over the real clips, fixed per seed.
  std::vector<int> train_idx;
  std::vector<int> val_idx;
  {
    std::map<int, std::vector<int>> by_species;
    for (int i : region_idx) {
      const Clip& c = data.clips[i];
      if (c.entry.synthetic) {
        train_idx.push_back(i);
      } else {
        by_species[c.entry.species].push_back(i);
      }
    }
    Rng vrng = Rng::derive(cfg.seed, 0x76616cULL, static_cast<std::uint64_t>(train_region));
    for (auto& [species, members] : by_species) {
      for (int k = static_cast<int>(members.size()) - 1; k > 0; --k) {
        std::swap(members[k], members[vrng.uniform_int(k + 1)]);
      }
      auto n_val = static_cast<std::size_t>(std::floor(cfg.val_fraction * members.size()));
      val_idx.insert(val_idx.end(), members.begin(), members.begin() + n_val);
      train_idx.insert(train_idx.end(), members.begin() + n_val, members.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(val_idx.begin(), val_idx.end());
  }

  std::vector<Item> items;
  for (int i : train_idx) {
    const Clip& c = data.clips[i];
    items.push_back({&c.features, c.waveform.get(), c.entry.species, c.entry.region,
                     c.entry.synthetic ? cfg.w_syn : c.entry.weight, c.entry.synthetic});
  }
  std::vector<Sample> transferred;
  if (cfg.toggles.dialect_transfer) {
    std::vector<int> species =
        cfg.transfer_species.empty() ? scarce_species(data, train_region) : cfg.transfer_species;
    transferred =
        transfer_samples(data, cfg.transfer_source_region, train_region, species, cfg.w_syn);
    for (const Sample& s : transferred) {
      items.push_back({&s.features, nullptr, s.species, s.region, s.weight, true});
    }
  }
  if (log) {
    *log << "train: region " << train_region << ", " << items.size() << " training items ("
         << transferred.size() << " transferred), " << val_idx.size() << " validation clips\n";
  }

  // Unlabeled clips from the other regions feed the domain classifier.
  std::vector<const Clip*> domain_pool;
  if (cfg.toggles.grl && cfg.domain_batch > 0) {
    for (int r : data.regions()) {
      if (r == train_region) continue;
      for (int i : data.select(r, Split::kTrain, false)) domain_pool.push_back(&data.clips[i]);
    }
  }

  TrainResult result;
  result.model = ModelState<float>::initialize(topo, cfg.seed);
  ModelState<float>& model = result.model;
  const int frames = items.front().features->n_frames();
  if (items.front().features->n_mels() != topo.n_mels) {
    throw Error("feature bins do not match the model's n_mels");
  }
  {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(topo.n_mels);
    double count = 0.0;
    for (const Item& it : items) {
      mean += it.features->values.cast<double>().rowwise().sum();
      count += static_cast<double>(it.features->n_frames());
    }
    model.feature_mean = (mean / count).cast<float>();
  }

  std::vector<int> labels;
  for (const Item& it : items) labels.push_back(it.species);
  ClassAwareSampler sampler(labels);
  Rng sample_rng = Rng::derive(cfg.seed, 0x73616dULL, static_cast<std::uint64_t>(train_region));

  const int steps_per_epoch =
      static_cast<int>((items.size() + cfg.batch_size - 1) / static_cast<std::size_t>(cfg.batch_size));
  const long total_steps = static_cast<long>(steps_per_epoch) * cfg.epochs;
  std::vector<std::vector<float>> velocity, second;
  std::vector<float> block_scale;
  std::vector<bool> decayed;
  for (auto& p : model.parameters()) {
    velocity.emplace_back(p.values.size(), 0.0f);
    if (cfg.optimizer == Optimizer::kAdam) second.emplace_back(p.values.size(), 0.0f);
    const bool domain = p.name.rfind("domain_head.", 0) == 0;
    block_scale.push_back(static_cast<float>(domain ? cfg.domain_lr_scale : 1.0));
    decayed.push_back(p.name.size() > 7 && p.name.compare(p.name.size() - 7, 7, ".weight") == 0);
  }

  std::vector<const MelSpectrogram*> val_feats;
  std::vector<int> val_truth;
  for (int i : val_idx) {
    val_feats.push_back(&data.clips[i].features);
    val_truth.push_back(data.clips[i].entry.species);
  }

  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lambda = cfg.toggles.grl ? cfg.grl_schedule.lambda(epoch) : 0.0;
    const double backward_lambda = cfg.detach_domain ? 0.0 : lambda;
    double loss_sum = 0.0;
    double lr_now = cfg.lr;
    for (int b = 0; b < steps_per_epoch; ++b, ++step) {
      std::vector<const Item*> chosen;
      for (int k = 0; k < cfg.batch_size; ++k) chosen.push_back(&items[sampler.next(sample_rng)]);
      const int n_labeled = static_cast<int>(chosen.size());
      std::vector<Item> unlabeled;
      if (!domain_pool.empty()) {
        for (int k = 0; k < cfg.domain_batch; ++k) {
          const Clip* c = domain_pool[sample_rng.uniform_int(static_cast<int>(domain_pool.size()))];
          unlabeled.push_back(
              {&c->features, c->waveform.get(), c->entry.species, c->entry.region, 0.0, false});
        }
      }
      for (const Item& u : unlabeled) chosen.push_back(&u);

      std::vector<Sample> batch(chosen.size());
      parallel_for(static_cast<int>(chosen.size()), [&](int k) {
        Rng r = Rng::derive(cfg.seed ^ cfg.augment.rng_seed, static_cast<std::uint64_t>(step),
                            static_cast<std::uint64_t>(k), 0x617567ULL);
        batch[k] = prepare(*chosen[k], cfg, r);
      });

      if (cfg.toggles.mixup) {
        Rng mrng = Rng::derive(cfg.seed, static_cast<std::uint64_t>(step), 0x6d6978ULL);
        std::vector<Sample> original(batch.begin(), batch.begin() + n_labeled);
        for (int k = 0; k < n_labeled && n_labeled > 1; ++k) {
          if (!mrng.bernoulli(0.5)) continue;
          int j = mrng.uniform_int(n_labeled - 1);
          if (j >= k) ++j;
          double lam = mrng.beta(cfg.augment.mixup_alpha, cfg.augment.mixup_alpha);
          batch[k] = mixup(original[k], original[j], lam, topo.n_species);
        }
      }

      std::vector<const MelSpectrogram*> feats;
      std::vector<LossTarget> targets;
      for (int k = 0; k < static_cast<int>(batch.size()); ++k) {
        feats.push_back(&batch[k].features);
        LossTarget t;
        t.region = batch[k].region;
        if (k < n_labeled) {
          t.species_dist = batch[k].label_distribution(topo.n_species);
          t.weight = batch[k].weight;
        } else {
          t.species_dist.assign(topo.n_species, 0.0);
          t.weight = 0.0;
        }
        targets.push_back(std::move(t));
      }

      ForwardCache<float> cache;
      ForwardResult<float> out = forward(model, stack(feats, frames), frames, true, &cache);
      if (cfg.toggles.grl && cfg.domain_steps > 0) {
        refit_domain_head(model.domain_head, cache.embedding, targets, cfg.alpha_domain,
                          cfg.domain_steps);
        out.domain_logits = (model.domain_head.weight * cache.embedding).colwise() +
                            model.domain_head.bias;
      }
      LossResult<float> loss =
          weighted_loss<float>(targets, out.species_logits, out.domain_logits, cfg.alpha_domain);
      if (!std::isfinite(loss.total)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + " (step " + std::to_string(step) + ")");
      }
      loss_sum += loss.total;
      ModelGrads<float> grads = backward(model, cache, loss.species_grad, loss.domain_grad,
                                         static_cast<float>(backward_lambda));
      lr_now = cosine_lr(cfg, step, total_steps);
      auto params = model.parameters();
      auto gblocks = grads.blocks();
      const float mu = static_cast<float>(cfg.momentum);
      const float lr_f = static_cast<float>(lr_now);
      if (cfg.optimizer == Optimizer::kSgd) {
        for (std::size_t p = 0; p < params.size(); ++p) {
          auto& v = velocity[p];
          const float lr_p = lr_f * block_scale[p];
          for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = mu * v[i] + gblocks[p].values[i];
            params[p].values[i] -= lr_p * v[i];
          }
        }
      } else {
        // Bias-corrected Adam; per-parameter scaling copes with the IFN input,
        // where first-layer gradients are several times smaller than the head's.
        const float b2 = static_cast<float>(cfg.adam_beta2);
        const float eps = static_cast<float>(cfg.adam_eps);
        const double t = static_cast<double>(step + 1);
        const float c1 = static_cast<float>(1.0 - std::pow(cfg.momentum, t));
        const float c2 = static_cast<float>(1.0 - std::pow(cfg.adam_beta2, t));
        for (std::size_t p = 0; p < params.size(); ++p) {
          auto& m1 = velocity[p];
          auto& m2 = second[p];
          const float lr_p = lr_f * block_scale[p];
          for (std::size_t i = 0; i < m1.size(); ++i) {
            const float g = gblocks[p].values[i];
            m1[i] = mu * m1[i] + (1.0f - mu) * g;
            m2[i] = b2 * m2[i] + (1.0f - b2) * g * g;
            const float mhat = c1 > 0.0f ? m1[i] / c1 : m1[i];
            const float vhat = c2 > 0.0f ? m2[i] / c2 : m2[i];
            params[p].values[i] -= lr_p * mhat / (std::sqrt(vhat) + eps);
          }
        }
      }
      if (cfg.weight_decay > 0.0) {
        for (std::size_t p = 0; p < params.size(); ++p) {
          if (!decayed[p]) continue;
          const float keep = 1.0f - lr_f * block_scale[p] * static_cast<float>(cfg.weight_decay);
          for (float& w : params[p].values) w *= keep;
        }
      }
    }
    EpochLog e;
    e.epoch = epoch;
    e.mean_loss = steps_per_epoch > 0 ? loss_sum / steps_per_epoch : 0.0;
    e.lambda = lambda;
    e.lr = lr_now;
    e.val_count = static_cast<int>(val_feats.size());
    if (!val_feats.empty()) {
      std::vector<int> pred = predict(model, val_feats);
      e.val_accuracy = compute_metrics(val_truth, pred, topo.n_species).accuracy;
    }
    result.log.push_back(e);
    if (log) {
      *log << "epoch " << (epoch + 1) << "/" << cfg.epochs << " loss " << std::fixed
           << std::setprecision(4) << e.mean_loss << " lambda " << std::setprecision(3)
           << e.lambda << " lr " << std::setprecision(5) << e.lr << " val_acc "
           << std::setprecision(3) << e.val_accuracy << " (n=" << e.val_count << ")\n"
           << std::defaultfloat;
    }
  }
  return result;
}

std::vector<CellSummary> Report::summarize() const {
  std::vector<CellSummary> out;
  std::vector<std::vector<const ReportRecord*>> groups;
  for (const ReportRecord& r : records) {
    std::size_t g = 0;
    for (; g < out.size(); ++g) {
      if (out[g].variant == r.variant && out[g].train_region == r.train_region &&
          out[g].test_region == r.test_region) {
        break;
      }
    }
    if (g == out.size()) {
      CellSummary c;
      c.train_region = r.train_region;
      c.test_region = r.test_region;
      c.variant = r.variant;
      out.push_back(c);
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    std::vector<double> acc, uar, f1;
    for (const ReportRecord* r : groups[g]) {
      acc.push_back(r->metrics.accuracy);
      uar.push_back(r->metrics.uar);
      f1.push_back(r->metrics.macro_f1);
    }
    out[g].accuracy = mean_std(acc);
    out[g].uar = mean_std(uar);
    out[g].macro_f1 = mean_std(f1);
    out[g].runs = static_cast<int>(groups[g].size());
  }
  return out;
}

void Report::write(std::ostream& out) const {
  out << "train_region,test_region,variant,seed,acc,uar,macro_f1\n";
  out << std::setprecision(6) << std::fixed;
  for (const ReportRecord& r : records) {
    out << r.train_region << "," << r.test_region << "," << r.variant << "," << r.seed << ","
        << r.metrics.accuracy << "," << r.metrics.uar << "," << r.metrics.macro_f1 << "\n";
  }
  out << "# summary\n";
  out << "# train_region,test_region,variant,runs,acc_mean,acc_std,uar_mean,uar_std,"
         "macro_f1_mean,macro_f1_std\n";
  for (const CellSummary& c : summarize()) {
    out << "# " << c.train_region << "," << c.test_region << "," << c.variant << "," << c.runs
        << "," << c.accuracy.mean << "," << c.accuracy.std << "," << c.uar.mean << ","
        << c.uar.std << "," << c.macro_f1.mean << "," << c.macro_f1.std << "\n";
  }
  out << std::defaultfloat;
}

void Report::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report " + path.string());
  write(out);
  if (!out) throw IoError("failed writing report " + path.string());
}

std::string Report::table() const {
  std::ostringstream os;
  auto cells = summarize();
  std::vector<std::string> variants;
  std::vector<int> trains, tests;
  for (const CellSummary& c : cells) {
    if (std::find(variants.begin(), variants.end(), c.variant) == variants.end()) {
      variants.push_back(c.variant);
    }
    if (std::find(trains.begin(), trains.end(), c.train_region) == trains.end()) {
      trains.push_back(c.train_region);
    }
    if (std::find(tests.begin(), tests.end(), c.test_region) == tests.end()) {
      tests.push_back(c.test_region);
    }
  }
  std::sort(trains.begin(), trains.end());
  std::sort(tests.begin(), tests.end());
  os << std::fixed << std::setprecision(2);
  for (const std::string& v : variants) {
    os << "variant: " << (v.empty() ? "(unnamed)" : v) << "  (ACC % mean +/- std)\n";
    os << std::setw(10) << "train\\test";
    for (int t : tests) os << std::setw(18) << ("D" + std::to_string(t + 1));
    os << std::setw(12) << "cross";
    os << "\n";
    for (int tr : trains) {
      os << std::setw(10) << ("D" + std::to_string(tr + 1));
      double cross = 0.0;
      int n_cross = 0;
      bool any = false;
      for (int t : tests) {
        const CellSummary* found = nullptr;
        for (const CellSummary& c : cells) {
          if (c.variant == v && c.train_region == tr && c.test_region == t) found = &c;
        }
        if (found == nullptr) {
          os << std::setw(18) << "-";
          continue;
        }
        any = true;
        std::ostringstream cell;
        cell << std::fixed << std::setprecision(2) << 100.0 * found->accuracy.mean << " +/- "
             << 100.0 * found->accuracy.std;
        os << std::setw(18) << cell.str();
        if (t != tr) {
          cross += found->accuracy.mean;
          ++n_cross;
        }
      }
      if (any && n_cross > 0) {
        os << std::setw(12) << 100.0 * cross / n_cross;
      } else {
        os << std::setw(12) << "-";
      }
      os << "\n";
    }
  }
  return os.str();
}

Report run_matrix(const Dataset& data, const TrainConfig& cfg, const std::string& variant,
                  const ModelCallback& on_model, const ProgressCallback& progress) {
  cfg.validate();
  std::vector<int> regions = data.regions();
  if (regions.empty()) throw Error("dataset has no real clips");
  Report report;
  for (int tr : regions) {
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      TrainConfig c = cfg;
      c.seed = cfg.seed + static_cast<std::uint64_t>(rep);
      if (progress) {
        progress("training region " + std::to_string(tr) + " seed " + std::to_string(c.seed) +
                 (variant.empty() ? "" : " (" + variant + ")"));
      }
      TrainResult res = train(data, tr, c);
      if (on_model) on_model(tr, c.seed, res.model);
      for (int te : regions) {
        report.records.push_back({tr, te, variant, c.seed, evaluate(res.model, data, te)});
      }
    }
  }
  return report;
}

std::vector<AblationStage> ablation_ladder(const TrainConfig& base) {
  std::vector<AblationStage> out;
  TrainConfig c = base;
  c.toggles = TrainToggles{};
  out.push_back({"baseline", c});
  c.toggles.standard_aug = true;
  out.push_back({"+aug", c});
  c.toggles.grl = true;
  out.push_back({"+grl", c});
  c.toggles.mixup = true;
  out.push_back({"+mixup", c});
  c.toggles.dialect_transfer = true;
  out.push_back({"+transfer", c});
  return out;
}

Report run_ablation(const Dataset& data, const TrainConfig& cfg, int train_region,
                    const ProgressCallback& progress) {
  cfg.validate();
  int tr = train_region >= 0 ? train_region : lowest_resource_region(data);
  std::vector<int> regions = data.regions();
  Report report;
  for (const AblationStage& stage : ablation_ladder(cfg)) {
    for (int rep = 0; rep < cfg.repeats; ++rep) {
      TrainConfig c = stage.config;
      c.seed = cfg.seed + static_cast<std::uint64_t>(rep);
      if (progress) {
        progress("ablation " + stage.name + " region " + std::to_string(tr) + " seed " +
                 std::to_string(c.seed));
      }
      TrainResult res = train(data, tr, c);
      for (int te : regions) {
        report.records.push_back({tr, te, stage.name, c.seed, evaluate(res.model, data, te)});
      }
    }
  }
  return report;
}

}  // namespace dca
