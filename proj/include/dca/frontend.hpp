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

#include "dca/common.hpp"

#include <filesystem>
#include <vector>

namespace dca {

struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Log-Mel energies, n_mels rows by n_frames columns.
struct MelSpectrogram {
  MatrixF values;
  double frame_hop_s = static_cast<double>(kHopLength) / kSampleRate;

  int n_mels() const { return static_cast<int>(values.rows()); }
  int n_frames() const { return static_cast<int>(values.cols()); }
};

// Natural-log floor applied to every Mel energy.
inline const double kLogFloor = -23.025850929940457;  // log(1e-10)

// HTK Mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Centre frequencies (Hz) of the kNumMels triangular filters on 0..8 kHz.
std::vector<double> mel_center_frequencies();

// Band-limited (Kaiser-windowed sinc) sample-rate conversion.
Waveform resample(const Waveform& w, int target_rate);

// Resample by an arbitrary ratio (output length ~ input length * ratio),
// keeping the nominal sample rate. Used for pitch shifting.
std::vector<float> resample_ratio(std::span<const float> x, double ratio);

// Exact target_s * sample_rate samples: zero-pad at the end or centre-crop.
Waveform pad_or_trim(const Waveform& w, double target_s = kClipSeconds);

// Divides by max(|x|, 1e-8).
Waveform peak_normalize(const Waveform& w);

// 2048-point Hann STFT, hop 512, reflect-padded centre frames, 128 HTK Mel
// filters (area normalised), natural log with a 1e-10 floor. Requires an
// 8 s, 16 kHz waveform; the waveform is peak-normalised first.
MelSpectrogram log_mel(const Waveform& w);

// Full chain for arbitrary input: resample to 16 kHz, pad/trim to 8 s, log_mel.
MelSpectrogram extract_features(const Waveform& w);

// WAV I/O. Reads PCM16 or float32 (first channel of multichannel files).
Waveform read_wav(const std::filesystem::path& path);
Waveform parse_wav(std::span<const unsigned char> bytes);
// Writes 16-bit PCM mono.
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace dca
