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

#include "dca/synth.hpp"

#include "dca/tensor_io.hpp"
#include "dca/training.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace dca {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kMaxShift = 1.12;
constexpr double kPeak = 0.9;

std::vector<double> tilted_noise(std::size_t n, double tilt_db_per_octave, Rng& rng) {
  std::vector<double> white(n);
  for (double& v : white) v = rng.normal();
  if (tilt_db_per_octave == 0.0) return white;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, white);
  const double df = static_cast<double>(kSampleRate) / static_cast<double>(n);
  for (std::size_t k = 0; k < spec.size(); ++k) {
    std::size_t bin = std::min(k, spec.size() - k);
    double f = std::max(50.0, static_cast<double>(bin) * df);
    double gain_db = tilt_db_per_octave * std::log2(f / 1000.0);
    spec[k] *= std::pow(10.0, gain_db / 20.0);
  }
  std::vector<double> out;
  fft.inv(out, spec);
  out.resize(n);
  return out;
}

}  // namespace

std::vector<SpeciesProfile> default_species(int n_species) {
  std::vector<SpeciesProfile> out;
  for (int s = 0; s < n_species; ++s) {
    SpeciesProfile p;
    double frac = n_species > 1 ? static_cast<double>(s) / (n_species - 1) : 0.0;
    p.f0 = 600.0 * std::pow(4000.0 / 600.0, frac);
    int nominal = 3 + (s * 7) % 4;
    double top = p.f0 * kMaxShift * (1.0 + kF0Jitter);
    int cap = static_cast<int>(std::floor((0.95 * kSampleRate / 2.0) / top));
    p.n_harmonics = std::max(1, std::min(nominal, cap));
    p.harmonic_decay = 0.35 + 0.1 * (s % 5);
    p.syllable_rate = 2.0 + 0.7 * ((s * 3) % 10);
    p.syllable_duty = 0.3 + 0.06 * (s % 6);
    p.am_depth = 0.1 + 0.08 * ((s * 5) % 6);
    p.am_rate = 18.0 + 1.5 * s;
    out.push_back(p);
  }
  return out;
}

std::vector<DialectProfile> default_dialects() {
  return {{1.0, 1.0, 0.0, 25.0}, {1.12, 0.85, -3.0, 18.0}, {0.9, 1.2, 3.0, 22.0}};
}

int SynthConfig::clips_in_cell(int species, int region) const {
  bool scarce = region == scarce_region &&
                std::find(scarce_species.begin(), scarce_species.end(), species) !=
                    scarce_species.end();
  return scarce ? std::max(1, clips_per_cell / 4) : clips_per_cell;
}

void SynthConfig::validate() const {
  if (clips_per_cell < 4) throw ConfigError("clips per cell must be at least 4");
  if (n_species < 1 || n_species > kNumSpecies) throw ConfigError("species count out of range");
  if (n_regions < 1 || n_regions > kNumRegions) throw ConfigError("region count out of range");
  for (int s : scarce_species) {
    if (s < 0 || s >= n_species) throw ConfigError("scarce species out of range");
  }
}

Waveform synthesize_clip(const SpeciesProfile& sp, const DialectProfile& d, std::uint64_t seed,
                         int species_id, int region, int clip_index) {
  if (!(d.f0_shift > 0.0 && d.rate_shift > 0.0)) throw Error("dialect shifts must be positive");
  Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(species_id),
                        static_cast<std::uint64_t>(region), static_cast<std::uint64_t>(clip_index));
  const std::size_t n = kClipSamples;
  const double f0 = sp.f0 * d.f0_shift * (1.0 + rng.uniform(-kF0Jitter, kF0Jitter));
  const double rate = sp.syllable_rate * d.rate_shift;
  const double period = 1.0 / rate;
  const double on = sp.syllable_duty * period;
  const double onset = rng.uniform() * period;
  const double am_phase = rng.uniform() * kTwoPi;
  std::vector<double> phase(static_cast<std::size_t>(sp.n_harmonics));
  for (double& p : phase) p = rng.uniform() * kTwoPi;

  std::vector<double> signal(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double t = static_cast<double>(i) / kSampleRate;
    double pos = t - onset;
    pos -= std::floor(pos / period) * period;
    if (pos >= on) continue;
    double env = 0.5 - 0.5 * std::cos(kTwoPi * pos / on);
    double am = 1.0 - sp.am_depth * (0.5 + 0.5 * std::sin(kTwoPi * sp.am_rate * t + am_phase));
    double v = 0.0;
    double amp = 1.0;
    for (int h = 0; h < sp.n_harmonics; ++h) {
      double f = f0 * (h + 1);
      if (f < 0.5 * kSampleRate) v += amp * std::sin(kTwoPi * f * t + phase[h]);
      amp *= sp.harmonic_decay;
    }
    signal[i] = env * am * v;
  }

  std::vector<double> noise = tilted_noise(n, d.noise_tilt_db_per_octave, rng);
  double ps = 0.0;
  double pn = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ps += signal[i] * signal[i];
    pn += noise[i] * noise[i];
  }
  double scale = pn > 0.0 ? std::sqrt(ps / pn / std::pow(10.0, d.noise_snr_db / 10.0)) : 0.0;
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    signal[i] += scale * noise[i];
    peak = std::max(peak, std::abs(signal[i]));
  }
  Waveform w;
  w.sample_rate = kSampleRate;
  w.samples.resize(n);
  double g = peak > 0.0 ? kPeak / peak : 0.0;
  for (std::size_t i = 0; i < n; ++i) w.samples[i] = static_cast<float>(g * signal[i]);
  return w;
}

Manifest generate_corpus(const SynthConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  const auto species = default_species(cfg.n_species);
  const auto dialects = default_dialects();

  Manifest m;
  m.base_dir = out_dir;
  for (int r = 0; r < cfg.n_regions; ++r) {
    for (int s = 0; s < cfg.n_species; ++s) {
      std::ostringstream dir;
      dir << "r" << r << "/s" << s;
      std::filesystem::create_directories(out_dir / dir.str(), ec);
      if (ec) throw IoError("cannot create " + (out_dir / dir.str()).string());
      for (int k = 0; k < cfg.clips_in_cell(s, r); ++k) {
        std::ostringstream name;
        name << dir.str() << "/clip_" << std::setw(3) << std::setfill('0') << k << ".wav";
        m.entries.push_back({name.str(), s, r, false, 1.0});
      }
    }
  }
  parallel_for(static_cast<int>(m.entries.size()), [&](int i) {
    const ManifestEntry& e = m.entries[static_cast<std::size_t>(i)];
    int k = std::stoi(e.path.substr(e.path.rfind('_') + 1));
    Waveform w = synthesize_clip(species[e.species], dialects[e.region], cfg.seed, e.species,
                                 e.region, k);
    write_wav(out_dir / e.path, w);
  });
  write_manifest(out_dir / "manifest.csv", m);
  return m;
}

std::vector<double> manifest_ltas(const Manifest& manifest, int region,
                                  const DatasetOptions& options) {
  Manifest sub;
  sub.base_dir = manifest.base_dir;
  for (const ManifestEntry& e : manifest.entries) {
    if (e.region == region && !e.synthetic) sub.entries.push_back(e);
  }
  if (sub.entries.empty()) throw Error("region " + std::to_string(region) + " not in manifest");
  std::filesystem::path cached;
  if (!options.cache_dir.empty()) {
    cached = options.cache_dir /
             ("ltas_" + manifest.hash() + "_r" + std::to_string(region) + ".melx");
    if (std::filesystem::exists(cached)) {
      MatrixF m = read_tensor(cached);
      return std::vector<double>(m.data(), m.data() + m.size());
    }
  }
  DatasetOptions opt = options;
  opt.keep_waveforms = false;
  std::vector<double> out = region_ltas(Dataset::load(sub, opt), region);
  // Float precision either way, so cached and fresh results agree.
  for (double& v : out) v = static_cast<float>(v);
  if (!cached.empty()) {
    std::filesystem::create_directories(cached.parent_path());
    MatrixF m(static_cast<Eigen::Index>(out.size()), 1);
    for (std::size_t i = 0; i < out.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = static_cast<float>(out[i]);
    write_tensor(cached, m);
  }
  return out;
}

}  // namespace dca
