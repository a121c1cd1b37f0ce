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

#include <algorithm>
#include <cmath>

namespace dca {

void AugmentConfig::validate() const {
  auto bad = [](const char* what) { throw ConfigError(std::string("augmentation: ") + what); };
  if (!(pitch_semitone_range >= 0.0) || pitch_semitone_range > 12.0) bad("pitch range must be in [0, 12]");
  if (!(time_shift_range_s >= 0.0)) bad("time shift range must be non-negative");
  if (!(noise_snr_db_min <= noise_snr_db_max)) bad("empty SNR range");
  if (freq_masks < 0 || time_masks < 0 || freq_mask_max < 0 || time_mask_max < 0) {
    bad("mask counts and widths must be non-negative");
  }
  if (!(mixup_alpha > 0.0)) bad("mixup_alpha must be positive");
  if (!(apply_prob >= 0.0 && apply_prob <= 1.0)) bad("apply_prob must be in [0, 1]");
}

std::vector<double> Sample::label_distribution(int n_species) const {
  if (soft_label) return *soft_label;
  std::vector<double> d(static_cast<std::size_t>(n_species), 0.0);
  d.at(static_cast<std::size_t>(species)) = 1.0;
  return d;
}

Waveform pitch_shift(const Waveform& w, double semitones) {
  if (std::abs(semitones) > 12.0) throw ConfigError("pitch shift beyond one octave");
  if (semitones == 0.0) return w;
  const double ratio = std::pow(2.0, -semitones / 12.0);
  Waveform shifted{resample_ratio(w.samples, ratio), w.sample_rate};
  return pad_or_trim(shifted, w.duration_s());
}

Waveform time_shift(const Waveform& w, double shift_s) {
  const auto n = static_cast<std::int64_t>(w.samples.size());
  if (n == 0) return w;
  std::int64_t k = std::llround(shift_s * w.sample_rate) % n;
  if (k < 0) k += n;
  if (k == 0) return w;
  Waveform out = w;
  std::rotate_copy(w.samples.begin(), w.samples.end() - k, w.samples.end(), out.samples.begin());
  return out;
}

Waveform add_noise(const Waveform& w, double snr_db, Rng& rng) {
  if (!std::isfinite(snr_db)) throw ConfigError("add_noise: SNR must be finite");
  double p_signal = 0.0;
  for (float v : w.samples) p_signal += static_cast<double>(v) * v;
  if (w.samples.empty() || p_signal == 0.0) return w;
  p_signal /= static_cast<double>(w.samples.size());
  std::vector<double> noise(w.samples.size());
  double p_noise = 0.0;
  for (double& v : noise) {
    v = rng.normal();
    p_noise += v * v;
  }
  p_noise /= static_cast<double>(noise.size());
  const double scale = std::sqrt(p_signal / (p_noise * std::pow(10.0, snr_db / 10.0)));
  Waveform out = w;
  for (std::size_t i = 0; i < noise.size(); ++i) {
    out.samples[i] = static_cast<float>(w.samples[i] + scale * noise[i]);
  }
  return out;
}

MelSpectrogram spec_augment(const MelSpectrogram& x, const AugmentConfig& cfg, Rng& rng) {
  const int f = x.n_mels();
  const int t = x.n_frames();
  if (cfg.freq_mask_max > f || cfg.time_mask_max > t) {
    throw ConfigError("spec_augment: mask width exceeds axis length");
  }
  MelSpectrogram out = x;
  const float fill = x.values.mean();
  for (int m = 0; m < cfg.freq_masks; ++m) {
    const int width = rng.uniform_int(cfg.freq_mask_max + 1);
    const int start = rng.uniform_int(f - width + 1);
    if (width > 0) out.values.middleRows(start, width).setConstant(fill);
  }
  for (int m = 0; m < cfg.time_masks; ++m) {
    const int width = rng.uniform_int(cfg.time_mask_max + 1);
    const int start = rng.uniform_int(t - width + 1);
    if (width > 0) out.values.middleCols(start, width).setConstant(fill);
  }
  return out;
}

Sample mixup(const Sample& a, const Sample& b, double lambda, int n_species) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("mixup: lambda must be in [0, 1]");
  if (a.features.values.rows() != b.features.values.rows() ||
      a.features.values.cols() != b.features.values.cols()) {
    throw Error("mixup: feature shape mismatch");
  }
  const std::vector<double> la = a.label_distribution(n_species);
  const std::vector<double> lb = b.label_distribution(n_species);
  Sample out;
  out.region = a.region;
  out.synthetic = a.synthetic || b.synthetic;
  out.features.frame_hop_s = a.features.frame_hop_s;
  if (lambda == 1.0) {
    out.features = a.features;
  } else if (lambda == 0.0) {
    out.features = b.features;
  } else {
    const auto l = static_cast<float>(lambda);
    out.features.values = l * a.features.values + (1.0f - l) * b.features.values;
  }
  std::vector<double> soft(static_cast<std::size_t>(n_species));
  for (std::size_t i = 0; i < soft.size(); ++i) soft[i] = lambda * la[i] + (1.0 - lambda) * lb[i];
  out.species = lambda >= 0.5 ? a.species : b.species;
  out.weight = lambda * a.weight + (1.0 - lambda) * b.weight;
  out.soft_label = std::move(soft);
  return out;
}

ClassAwareSampler::ClassAwareSampler(std::span<const int> labels, int n_classes) {
  by_class_.resize(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= n_classes) throw Error("class-aware sampler: label out of range");
    by_class_[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
  }
  std::string empty;
  for (int c = 0; c < n_classes; ++c) {
    if (by_class_[static_cast<std::size_t>(c)].empty()) {
      empty += (empty.empty() ? "" : ", ") + std::to_string(c);
    }
  }
  if (!empty.empty()) throw Error("class-aware sampler: empty class(es): " + empty);
}

ClassAwareSampler::ClassAwareSampler(std::span<const int> labels) {
  if (labels.empty()) throw Error("class-aware sampler: no samples");
  const int max_label = *std::max_element(labels.begin(), labels.end());
  std::vector<std::vector<int>> all(static_cast<std::size_t>(max_label + 1));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) throw Error("class-aware sampler: negative label");
    all[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
  }
  for (auto& members : all) {
    if (!members.empty()) by_class_.push_back(std::move(members));
  }
}

int ClassAwareSampler::next(Rng& rng) const {
  const auto& members = by_class_[static_cast<std::size_t>(rng.uniform_int(n_classes()))];
  return members[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(members.size())))];
}

Sample dialect_transfer(const Sample& src, std::span<const double> ltas_src,
                        std::span<const double> ltas_tgt, int target_region, double w_syn) {
  const auto f = static_cast<std::size_t>(src.features.n_mels());
  if (ltas_src.size() != f || ltas_tgt.size() != f) throw Error("dialect_transfer: LTAS length mismatch");
  Sample out = src;
  for (std::size_t r = 0; r < f; ++r) {
    const auto delta = static_cast<float>(ltas_tgt[r] - ltas_src[r]);
    out.features.values.row(static_cast<Eigen::Index>(r)).array() += delta;
  }
  out.region = target_region;
  out.synthetic = true;
  out.weight = w_syn;
  return out;
}

std::vector<double> ltas(std::span<const MelSpectrogram* const> clips) {
  if (clips.empty()) throw Error("ltas: no clips");
  const int f = clips.front()->n_mels();
  VectorD acc = VectorD::Zero(f);
  double frames = 0.0;
  for (const MelSpectrogram* c : clips) {
    if (c->n_mels() != f) throw Error("ltas: inconsistent Mel bin count");
    acc += c->values.cast<double>().rowwise().sum();
    frames += c->n_frames();
  }
  acc /= frames;
  return {acc.data(), acc.data() + acc.size()};
}

}  // namespace dca
