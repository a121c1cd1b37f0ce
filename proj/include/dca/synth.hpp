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

#include "dca/dataset.hpp"
#include "dca/frontend.hpp"
#include "dca/rng.hpp"

#include <filesystem>
#include <vector>

namespace dca {

struct SpeciesProfile {
  double f0 = 1000.0;
  int n_harmonics = 3;
  // Amplitude ratio between successive harmonics.
  double harmonic_decay = 0.5;
  double syllable_rate = 4.0;
  double syllable_duty = 0.5;
  double am_depth = 0.2;
  double am_rate = 25.0;
};

struct DialectProfile {
  double f0_shift = 1.0;
  double rate_shift = 1.0;
  double noise_tilt_db_per_octave = 0.0;
  double noise_snr_db = 25.0;
};

inline constexpr double kF0Jitter = 0.03;

// Ten log-spaced species between 600 and 4000 Hz. Harmonic counts are capped
// so the top harmonic stays below Nyquist under the largest dialect shift
// and jitter.
std::vector<SpeciesProfile> default_species(int n_species = kNumSpecies);
std::vector<DialectProfile> default_dialects();

struct SynthConfig {
  int clips_per_cell = 20;
  std::vector<int> scarce_species = {1, 3, 6, 8};
  int scarce_region = 1;
  std::uint64_t seed = 0;
  int n_species = kNumSpecies;
  int n_regions = kNumRegions;

  int clips_in_cell(int species, int region) const;
  void validate() const;
};

// A single 8 s, 16 kHz clip; depends only on (species, region, index, seed).
Waveform synthesize_clip(const SpeciesProfile& species, const DialectProfile& dialect,
                         std::uint64_t seed, int species_id, int region, int clip_index);

// Writes r<R>/s<S>/clip_<K>.wav files plus manifest.csv under out_dir, and
// returns the manifest.
Manifest generate_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir);

// Per-bin LTAS over the region's real training clips of a manifest, rounded to
// float. With options.cache_dir set the result is cached as
// ltas_<manifest hash>_r<region>.melx.
std::vector<double> manifest_ltas(const Manifest& manifest, int region,
                                  const DatasetOptions& options = {});

}  // namespace dca
