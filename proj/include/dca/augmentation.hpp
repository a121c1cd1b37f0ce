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

#include "dca/frontend.hpp"
#include "dca/rng.hpp"

#include <optional>
#include <span>
#include <vector>

namespace dca {

inline constexpr double kSyntheticWeight = 0.3;

struct AugmentConfig {
  double pitch_semitone_range = 2.0;
  double time_shift_range_s = 0.5;
  double noise_snr_db_min = 10.0;
  double noise_snr_db_max = 30.0;
  int freq_masks = 2;
  int freq_mask_max = 16;
  int time_masks = 2;
  int time_mask_max = 25;
  double mixup_alpha = 0.4;
  // Probability of applying each stage to a sample.
  double apply_prob = 0.5;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct Sample {
  MelSpectrogram features;
  int species = 0;
  int region = 0;
  double weight = 1.0;
  bool synthetic = false;
  // Set by mixup; sums to one.
  std::optional<std::vector<double>> soft_label;

  // Label distribution over n_species classes (one-hot unless mixed).
  std::vector<double> label_distribution(int n_species) const;
};

// Resamples by 2^(-semitones/12) and pads/trims back to the input length, so
// pitch and tempo scale together.
Waveform pitch_shift(const Waveform& w, double semitones);

// Circular shift by round(shift_s * rate) samples (positive delays).
Waveform time_shift(const Waveform& w, double shift_s);

// Adds white Gaussian noise at exactly snr_db relative to the signal power.
// Silent input is returned unchanged.
Waveform add_noise(const Waveform& w, double snr_db, Rng& rng);

// Replaces cfg.freq_masks bands of rows and cfg.time_masks spans of columns
// (widths uniform in [0, max]) with the spectrogram's global mean.
MelSpectrogram spec_augment(const MelSpectrogram& x, const AugmentConfig& cfg, Rng& rng);

// Convex combination lambda * a + (1 - lambda) * b of features, labels and
// weights. The region comes from a.
Sample mixup(const Sample& a, const Sample& b, double lambda, int n_species = kNumSpecies);

// Draws sample indices so that every class is equally likely (probability of
// an item proportional to 1 / count(its class)), with replacement.
class ClassAwareSampler {
 public:
  // Classes are [0, n_classes); an empty class is an error.
  ClassAwareSampler(std::span<const int> labels, int n_classes);
  // Classes are those present in labels.
  explicit ClassAwareSampler(std::span<const int> labels);

  int next(Rng& rng) const;
  int n_classes() const { return static_cast<int>(by_class_.size()); }

 private:
  std::vector<std::vector<int>> by_class_;
};

// Long-term-average-spectrum style transfer:
//   out(f, t) = x(f, t) - ltas_src(f) + ltas_tgt(f).
// The result keeps the species, takes the target region and is flagged
// synthetic with weight w_syn.
Sample dialect_transfer(const Sample& src, std::span<const double> ltas_src,
                        std::span<const double> ltas_tgt, int target_region,
                        double w_syn = kSyntheticWeight);

// Per-bin mean of log-Mel energy over a set of spectrograms.
std::vector<double> ltas(std::span<const MelSpectrogram* const> clips);

}  // namespace dca
