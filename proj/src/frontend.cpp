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

#include "dca/frontend.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

namespace dca {
namespace {

constexpr int kSincZeroCrossings = 16;
constexpr int kSincOversample = 512;
constexpr double kKaiserBeta = 8.6;

double bessel_i0(double x) {
  double sum = 1.0, term = 1.0;
  for (int k = 1; k < 50; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

// sinc(u) * kaiser(u / Z), tabulated on u in [0, Z].
const std::vector<double>& sinc_table() {
  static const std::vector<double> table = [] {
    const int n = kSincZeroCrossings * kSincOversample + 2;
    std::vector<double> t(n);
    const double norm = bessel_i0(kKaiserBeta);
    for (int i = 0; i < n; ++i) {
      const double u = static_cast<double>(i) / kSincOversample;
      const double sinc =
          i == 0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
      const double r = u / kSincZeroCrossings;
      const double win =
          r >= 1.0 ? 0.0 : bessel_i0(kKaiserBeta * std::sqrt(1.0 - r * r)) / norm;
      t[i] = sinc * win;
    }
    return t;
  }();
  return table;
}

inline double kernel(double u) {
  u = std::abs(u);
  if (u >= kSincZeroCrossings) return 0.0;
  const double pos = u * kSincOversample;
  const auto i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  const auto& t = sinc_table();
  return t[i] + frac * (t[i + 1] - t[i]);
}

// out[n] samples the band-limited input at input position n / ratio.
std::vector<float> sinc_resample(std::span<const float> x, double ratio,
                                 std::size_t out_len) {
  const double cutoff = std::min(1.0, ratio);
  const double half_width = kSincZeroCrossings / cutoff;
  const auto n_in = static_cast<std::ptrdiff_t>(x.size());
  std::vector<float> out(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const auto lo = std::max<std::ptrdiff_t>(
        0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(
        n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      acc += x[static_cast<std::size_t>(k)] * kernel(cutoff * (t - static_cast<double>(k)));
    }
    out[n] = static_cast<float>(cutoff * acc);
  }
  return out;
}

struct MelFilterbank {
  // kNumMels x (kFftSize / 2 + 1)
  MatrixD weights;
};

const MelFilterbank& mel_filterbank() {
  static const MelFilterbank fb = [] {
    const int n_bins = kFftSize / 2 + 1;
    const double mel_max = hz_to_mel(kSampleRate / 2.0);
    std::vector<double> edges(kNumMels + 2);
    for (int i = 0; i < kNumMels + 2; ++i) {
      edges[i] = mel_to_hz(mel_max * i / (kNumMels + 1));
    }
    MelFilterbank out;
    out.weights = MatrixD::Zero(kNumMels, n_bins);
    for (int m = 0; m < kNumMels; ++m) {
      const double lower = edges[m], centre = edges[m + 1], upper = edges[m + 2];
      const double area_norm = 2.0 / (upper - lower);
      for (int k = 0; k < n_bins; ++k) {
        const double f = static_cast<double>(k) * kSampleRate / kFftSize;
        const double rise = (f - lower) / (centre - lower);
        const double fall = (upper - f) / (upper - centre);
        const double w = std::max(0.0, std::min(rise, fall));
        out.weights(m, k) = w * area_norm;
      }
    }
    return out;
  }();
  return fb;
}

const std::vector<double>& hann_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(kFftSize);
    // Periodic Hann.
    for (int i = 0; i < kFftSize; ++i) {
      v[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kFftSize);
    }
    return v;
  }();
  return w;
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}
void put_u16(std::vector<unsigned char>& b, std::uint16_t v) {
  b.push_back(static_cast<unsigned char>(v & 0xff));
  b.push_back(static_cast<unsigned char>(v >> 8));
}
void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_center_frequencies() {
  const double mel_max = hz_to_mel(kSampleRate / 2.0);
  std::vector<double> c(kNumMels);
  for (int m = 0; m < kNumMels; ++m) c[m] = mel_to_hz(mel_max * (m + 1) / (kNumMels + 1));
  return c;
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0) throw ConfigError("target sample rate must be positive");
  if (w.samples.empty()) throw Error("empty waveform");
  if (w.sample_rate <= 0) throw Error("invalid source sample rate");
  if (target_rate == w.sample_rate) return w;
  const auto n = static_cast<std::int64_t>(w.samples.size());
  const auto out_len = static_cast<std::size_t>(
      (n * target_rate + w.sample_rate / 2) / w.sample_rate);
  const double ratio = static_cast<double>(target_rate) / w.sample_rate;
  return Waveform{sinc_resample(w.samples, ratio, out_len), target_rate};
}

std::vector<float> resample_ratio(std::span<const float> x, double ratio) {
  if (x.empty()) throw Error("empty waveform");
  if (!(ratio > 0.0)) throw ConfigError("resample ratio must be positive");
  if (ratio == 1.0) return {x.begin(), x.end()};
  const auto out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(x.size()) * ratio));
  return sinc_resample(x, ratio, out_len);
}

Waveform pad_or_trim(const Waveform& w, double target_s) {
  const auto target = static_cast<std::size_t>(std::llround(target_s * w.sample_rate));
  Waveform out{std::vector<float>(target, 0.0f), w.sample_rate};
  const std::size_t n = w.samples.size();
  if (n <= target) {
    std::copy(w.samples.begin(), w.samples.end(), out.samples.begin());
  } else {
    const std::size_t start = (n - target) / 2;
    std::copy_n(w.samples.begin() + static_cast<std::ptrdiff_t>(start), target,
                out.samples.begin());
  }
  return out;
}

Waveform peak_normalize(const Waveform& w) {
  float peak = 0.0f;
  for (float v : w.samples) peak = std::max(peak, std::abs(v));
  const double scale = 1.0 / std::max<double>(peak, 1e-8);
  Waveform out = w;
  for (float& v : out.samples) v = static_cast<float>(v * scale);
  return out;
}

MelSpectrogram log_mel(const Waveform& input) {
  if (input.sample_rate != kSampleRate ||
      input.samples.size() != static_cast<std::size_t>(kClipSamples)) {
    throw Error("frontend contract violated: expected " + std::to_string(kClipSamples) +
                " samples at " + std::to_string(kSampleRate) + " Hz, got " +
                std::to_string(input.samples.size()) + " at " +
                std::to_string(input.sample_rate) + " Hz");
  }
  for (float v : input.samples) {
    if (!std::isfinite(v)) throw Error("frontend contract violated: non-finite sample");
  }
  const Waveform w = peak_normalize(input);
  const int n = kClipSamples;
  const int pad = kFftSize / 2;
  // Reflect padding without repeating the edge sample.
  auto sample_at = [&](int i) -> double {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return w.samples[static_cast<std::size_t>(i)];
  };

  const int n_bins = kFftSize / 2 + 1;
  MatrixD power(n_bins, kNumFrames);
  const auto& window = hann_window();
  Eigen::FFT<double> fft;
  std::vector<double> frame(kFftSize);
  std::vector<std::complex<double>> spectrum;
  for (int t = 0; t < kNumFrames; ++t) {
    const int start = t * kHopLength - pad;
    for (int i = 0; i < kFftSize; ++i) frame[i] = sample_at(start + i) * window[i];
    fft.fwd(spectrum, frame);
    for (int k = 0; k < n_bins; ++k) power(k, t) = std::norm(spectrum[k]);
  }

  const MatrixD mel = mel_filterbank().weights * power;
  MelSpectrogram out;
  out.values.resize(kNumMels, kNumFrames);
  for (int t = 0; t < kNumFrames; ++t) {
    for (int m = 0; m < kNumMels; ++m) {
      out.values(m, t) = static_cast<float>(std::log(std::max(mel(m, t), 1e-10)));
    }
  }
  return out;
}

MelSpectrogram extract_features(const Waveform& w) {
  return log_mel(pad_or_trim(resample(w, kSampleRate), kClipSeconds));
}

Waveform parse_wav(std::span<const unsigned char> b) {
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 ||
      std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw IoError("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= b.size()) {
    const unsigned char* chunk = b.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = b.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw IoError("truncated fmt chunk");
      format = read_u16(chunk + 8);
      channels = read_u16(chunk + 10);
      rate = read_u32(chunk + 12);
      bits = read_u16(chunk + 22);
      if (format == 0xFFFE && size >= 40 && avail >= 40) format = read_u16(chunk + 32);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = b.data() + body;
      data_size = std::min<std::size_t>(size, avail);
    }
    pos = body + size + (size & 1u);
  }
  if (channels == 0 || rate == 0) throw IoError("missing fmt chunk");
  if (data == nullptr) throw IoError("missing data chunk");
  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32) {
    throw IoError("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                  std::to_string(bits) + " bits)");
  }
  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t n = data_size / frame_bytes;
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* p = data + i * frame_bytes;
    if (pcm16) {
      w.samples[i] = static_cast<float>(static_cast<std::int16_t>(read_u16(p)) / 32768.0);
    } else {
      const std::uint32_t u = read_u32(p);
      float f;
      std::memcpy(&f, &u, sizeof f);
      w.samples[i] = f;
    }
  }
  return w;
}

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  std::vector<unsigned char> b;
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put_u32(b, 36 + 2 * n);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(b, 16);
  put_u16(b, 1);
  put_u16(b, 1);
  put_u32(b, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(b, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(b, 2);
  put_u16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put_u32(b, 2 * n);
  for (float v : w.samples) {
    const double c = std::clamp(static_cast<double>(v), -1.0, 1.0);
    put_u16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dca
