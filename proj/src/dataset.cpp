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

#include "dca/dataset.hpp"

#include "dca/tensor_io.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

namespace dca {
namespace {

const char* kHeader = "path,species,region,synthetic,weight";

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& s, const std::string& what, int line) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("manifest line " + std::to_string(line) + ": bad " + what + " '" + s + "'");
  }
}

bool is_feature_file(const std::filesystem::path& p) { return p.extension() == ".melx"; }

std::vector<unsigned char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::filesystem::path Manifest::resolve(const ManifestEntry& e) const {
  const std::filesystem::path p(e.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::string Manifest::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& e : entries) {
    std::ostringstream os;
    os << e.path << ',' << e.species << ',' << e.region << ',' << e.synthetic << ',' << e.weight
       << '\n';
    const std::string s = os.str();
    h = fnv1a({reinterpret_cast<const unsigned char*>(s.data()), s.size()}, h);
  }
  return hex64(h);
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  if (!std::getline(in, line) || trim(line) != kHeader) {
    throw Error("manifest " + path.string() + ": expected header '" + kHeader + "'");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(trim(cell));
    if (f.size() != 5) {
      throw Error("manifest line " + std::to_string(line_no) + ": expected 5 fields");
    }
    ManifestEntry e;
    e.path = f[0];
    e.species = parse_int(f[1], "species", line_no);
    e.region = parse_int(f[2], "region", line_no);
    const int syn = parse_int(f[3], "synthetic flag", line_no);
    if (e.species < 0 || e.species >= kNumSpecies) {
      throw Error("manifest line " + std::to_string(line_no) + ": species out of range 0-9");
    }
    if (e.region < 0 || e.region >= kNumRegions) {
      throw Error("manifest line " + std::to_string(line_no) + ": region out of range 0-2");
    }
    if (syn != 0 && syn != 1) {
      throw Error("manifest line " + std::to_string(line_no) + ": synthetic must be 0 or 1");
    }
    e.synthetic = syn == 1;
    try {
      e.weight = std::stod(f[4]);
    } catch (const std::exception&) {
      throw Error("manifest line " + std::to_string(line_no) + ": bad weight");
    }
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << kHeader << '\n';
  for (const auto& e : m.entries) {
    out << e.path << ',' << e.species << ',' << e.region << ',' << (e.synthetic ? 1 : 0) << ','
        << e.weight << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Split> assign_splits(const Manifest& manifest, int test_stride) {
  std::vector<Split> split(manifest.entries.size(), Split::kTrain);
  if (test_stride <= 1) return split;
  std::map<std::pair<int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    if (!e.synthetic) cells[{e.region, e.species}].push_back(i);
  }
  for (auto& [key, idx] : cells) {
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return manifest.entries[a].path < manifest.entries[b].path;
    });
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k % static_cast<std::size_t>(test_stride) == static_cast<std::size_t>(test_stride - 1)) {
        split[idx[k]] = Split::kTest;
      }
    }
  }
  return split;
}

MelSpectrogram cached_features(const std::filesystem::path& audio,
                               const std::filesystem::path& cache_dir) {
  const auto bytes = slurp(audio);
  std::filesystem::path cached;
  if (!cache_dir.empty()) {
    cached = cache_dir / (hex64(fnv1a(bytes)) + ".melx");
    if (std::filesystem::exists(cached)) {
      MelSpectrogram m;
      m.values = read_tensor(cached);
      if (m.n_mels() == kNumMels && m.n_frames() == kNumFrames) return m;
    }
  }
  Waveform w;
  try {
    w = parse_wav(bytes);
  } catch (const IoError& e) {
    throw IoError(audio.string() + ": " + e.what());
  }
  MelSpectrogram m = extract_features(w);
  if (!cached.empty()) {
    std::filesystem::create_directories(cache_dir);
    write_tensor(cached, m.values);
  }
  return m;
}

Dataset Dataset::load(const Manifest& manifest, const DatasetOptions& options) {
  const std::vector<Split> splits = assign_splits(manifest, options.test_stride);
  Dataset d;
  d.clips.resize(manifest.entries.size());
  parallel_for(static_cast<int>(manifest.entries.size()), [&](int i) {
    const auto& e = manifest.entries[static_cast<std::size_t>(i)];
    Clip& c = d.clips[static_cast<std::size_t>(i)];
    c.entry = e;
    c.split = splits[static_cast<std::size_t>(i)];
    const auto path = manifest.resolve(e);
    if (is_feature_file(path)) {
      c.features.values = read_tensor(path);
      if (c.features.n_mels() != kNumMels || c.features.n_frames() != kNumFrames) {
        throw Error(path.string() + ": features are not " + std::to_string(kNumMels) + "x" +
                    std::to_string(kNumFrames));
      }
      return;
    }
    c.features = cached_features(path, options.cache_dir);
    if (options.keep_waveforms) {
      Waveform w = pad_or_trim(resample(read_wav(path), kSampleRate), kClipSeconds);
      c.waveform = std::make_shared<const Waveform>(peak_normalize(w));
    }
  });
  return d;
}

std::vector<int> Dataset::select(int region, Split split, bool include_synthetic) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const Clip& c = clips[i];
    if (c.entry.region != region || c.split != split) continue;
    if (c.entry.synthetic && !include_synthetic) continue;
    out.push_back(static_cast<int>(i));
  }
  return out;
}

int Dataset::count_real(int region) const {
  return static_cast<int>(std::count_if(clips.begin(), clips.end(), [&](const Clip& c) {
    return c.entry.region == region && !c.entry.synthetic;
  }));
}

std::vector<int> Dataset::regions() const {
  std::set<int> r;
  for (const auto& c : clips) {
    if (!c.entry.synthetic) r.insert(c.entry.region);
  }
  return {r.begin(), r.end()};
}

}  // namespace dca
