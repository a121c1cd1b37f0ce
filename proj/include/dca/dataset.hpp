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
#include "dca/frontend.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace dca {

// One manifest row: `path,species,region,synthetic,weight`. Paths are
// relative to the manifest's directory unless absolute. A path ending in
// .melx names precomputed features instead of audio.
struct ManifestEntry {
  std::string path;
  int species = 0;
  int region = 0;
  bool synthetic = false;
  double weight = 1.0;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::filesystem::path resolve(const ManifestEntry& e) const;
  // Content hash of the manifest rows (order-sensitive).
  std::string hash() const;
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

enum class Split { kTrain, kTest };

// Every real clip is assigned deterministically: within each (region,
// species) cell, sorted by path, every `test_stride`-th clip (positions
// stride-1, 2*stride-1, ...) is held out for testing. Synthetic clips are
// always training data.
std::vector<Split> assign_splits(const Manifest& manifest, int test_stride = 4);

struct Clip {
  ManifestEntry entry;
  Split split = Split::kTrain;
  MelSpectrogram features;
  // Peak-normalised 8 s, 16 kHz audio; absent for feature-only entries or
  // when waveforms were not requested.
  std::shared_ptr<const Waveform> waveform;
};

struct DatasetOptions {
  // Feature cache directory (content-hash keyed .melx files); empty disables.
  std::filesystem::path cache_dir;
  bool keep_waveforms = true;
  int test_stride = 4;
};

struct Dataset {
  std::vector<Clip> clips;

  static Dataset load(const Manifest& manifest, const DatasetOptions& options = {});

  // Indices of clips matching region/split (synthetic included if asked).
  std::vector<int> select(int region, Split split, bool include_synthetic = true) const;
  int count_real(int region) const;
  // Regions present among real clips, ascending.
  std::vector<int> regions() const;
};

// Features for a single audio file through the cache (computes and stores on
// a miss when cache_dir is non-empty).
MelSpectrogram cached_features(const std::filesystem::path& audio,
                               const std::filesystem::path& cache_dir);

}  // namespace dca
