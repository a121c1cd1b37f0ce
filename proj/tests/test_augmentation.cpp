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
#include "support.hpp"

#include "doctest.h"

#include <algorithm>
#include <cstring>
#include <numeric>

using namespace dca;

namespace {

Waveform tone(double freq, double seconds = 1.0) {
  return Waveform{test::sine(freq, kSampleRate, seconds), kSampleRate};
}

double power(std::span<const float> x) {
  double p = 0.0;
  for (float v : x) p += static_cast<double>(v) * v;
  return p / static_cast<double>(x.size());
}

MelSpectrogram random_mel(Rng& rng, int rows = 128, int cols = 251) {
  MelSpectrogram m;
  m.values = test::random_matrix<float>(rng, rows, cols, 3.0);
  return m;
}

Sample sample_with(float value, int species, double weight = 1.0) {
  Sample s;
  s.features.values = MatrixF::Constant(4, 5, value);
  s.species = species;
  s.weight = weight;
  return s;
}

// Lag-1 autocorrelation of one row, mean removed.
double autocorr(const MatrixF& m, Eigen::Index row) {
  Eigen::VectorXd r = m.row(row).cast<double>().transpose();
  r.array() -= r.mean();
  double num = 0.0;
  for (Eigen::Index t = 1; t < r.size(); ++t) num += r[t] * r[t - 1];
  return num / r.squaredNorm();
}

}  // namespace

TEST_CASE("pitch shift by zero semitones is the identity") {
  Waveform w = tone(440.0);
  Waveform out = pitch_shift(w, 0.0);
  REQUIRE(out.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    CHECK(std::abs(out.samples[i] - w.samples[i]) <= 1e-6);
  }
}

TEST_CASE("pitch shift up an octave moves 440 Hz to 880 Hz") {
  Waveform out = pitch_shift(tone(440.0), 12.0);
  auto [peak, df] = test::dft_peak(out.samples, kSampleRate);
  CHECK(std::abs(peak - 880.0) <= df);
}

TEST_CASE("pitch shift keeps the length") {
  Waveform w = tone(300.0, 0.7);
  for (double s : {-12.0, -2.0, -0.5, 0.5, 2.0, 12.0}) {
    CHECK(pitch_shift(w, s).samples.size() == w.samples.size());
  }
}

TEST_CASE("time shift by zero or by the clip length is the identity") {
  Waveform w = tone(523.0, 0.5);
  CHECK(time_shift(w, 0.0).samples == w.samples);
  CHECK(time_shift(w, w.duration_s()).samples == w.samples);
}

TEST_CASE("time shift is circular and delays") {
  Waveform w{{1, 2, 3, 4, 5, 6, 7, 8}, 8};
  CHECK(time_shift(w, 0.25).samples == std::vector<float>{7, 8, 1, 2, 3, 4, 5, 6});
  CHECK(time_shift(w, -0.25).samples == std::vector<float>{3, 4, 5, 6, 7, 8, 1, 2});
}

TEST_CASE("added noise hits the requested SNR") {
  Waveform w = tone(1000.0);
  for (double snr : {10.0, 17.5, 30.0}) {
    Rng rng(static_cast<std::uint64_t>(snr * 10));
    Waveform out = add_noise(w, snr, rng);
    std::vector<float> noise(w.samples.size());
    for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = out.samples[i] - w.samples[i];
    double measured = 10.0 * std::log10(power(w.samples) / power(noise));
    CHECK(std::abs(measured - snr) <= 0.1);
  }
}

TEST_CASE("noise on silence returns the input") {
  Waveform w{std::vector<float>(1000, 0.0f), kSampleRate};
  Rng rng(1);
  CHECK(add_noise(w, 20.0, rng).samples == w.samples);
}

TEST_CASE("spec augment with zero widths is the identity") {
  Rng rng(3);
  MelSpectrogram x = random_mel(rng);
  AugmentConfig cfg;
  cfg.freq_mask_max = 0;
  cfg.time_mask_max = 0;
  Rng r2(4);
  CHECK(spec_augment(x, cfg, r2).values == x.values);
}

TEST_CASE("spec augment touches only masked bands") {
  Rng data_rng(5);
  MelSpectrogram x = random_mel(data_rng);
  const float fill = x.values.mean();
  AugmentConfig cfg;
  int max_rows = 0, max_cols = 0;
  for (int draw = 0; draw < 100; ++draw) {
    Rng rng = Rng::derive(11, static_cast<std::uint64_t>(draw));
    MelSpectrogram y = spec_augment(x, cfg, rng);
    REQUIRE(y.values.rows() == x.values.rows());
    REQUIRE(y.values.cols() == x.values.cols());
    long wrong_fill = 0;
    for (Eigen::Index t = 0; t < x.values.cols(); ++t) {
      for (Eigen::Index f = 0; f < x.values.rows(); ++f) {
        if (y.values(f, t) != x.values(f, t) && y.values(f, t) != fill) ++wrong_fill;
      }
    }
    CHECK(wrong_fill == 0);
    // A cell changed by a frequency mask changes every column of its row.
    int full_rows = 0, full_cols = 0;
    for (Eigen::Index f = 0; f < x.values.rows(); ++f) {
      if ((y.values.row(f).array() == fill).all()) ++full_rows;
    }
    for (Eigen::Index t = 0; t < x.values.cols(); ++t) {
      if ((y.values.col(t).array() == fill).all()) ++full_cols;
    }
    max_rows = std::max(max_rows, full_rows);
    max_cols = std::max(max_cols, full_cols);
    CHECK(full_rows <= 2 * 16);
    CHECK(full_cols <= 2 * 25);
    // Cells outside full bands stay bit-identical.
    long changed_outside = 0;
    for (Eigen::Index t = 0; t < x.values.cols(); ++t) {
      const bool col_masked = (y.values.col(t).array() == fill).all();
      for (Eigen::Index f = 0; f < x.values.rows(); ++f) {
        const bool row_masked = (y.values.row(f).array() == fill).all();
        if (!col_masked && !row_masked && y.values(f, t) != x.values(f, t)) ++changed_outside;
      }
    }
    CHECK(changed_outside == 0);
  }
  CHECK(max_rows > 0);
  CHECK(max_cols > 0);
}

TEST_CASE("mixup endpoints and midpoint") {
  Sample a = sample_with(1.0f, 2);
  Sample b = sample_with(3.0f, 7, kSyntheticWeight);
  b.synthetic = true;
  b.region = 2;

  Sample one = mixup(a, b, 1.0);
  CHECK(one.features.values == a.features.values);
  CHECK(one.species == a.species);
  CHECK(one.weight == doctest::Approx(1.0));

  Sample mid = mixup(a, b, 0.5);
  CHECK((mid.features.values.array() == 2.0f).all());
  REQUIRE(mid.soft_label.has_value());
  const auto& y = *mid.soft_label;
  CHECK(y[2] == doctest::Approx(0.5));
  CHECK(y[7] == doctest::Approx(0.5));
  CHECK(std::accumulate(y.begin(), y.end(), 0.0) == doctest::Approx(1.0));
  CHECK(mid.weight == doctest::Approx(0.65));
  CHECK(mid.region == a.region);
  CHECK(mid.synthetic);
}

TEST_CASE("mixup is a convex combination") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Sample a, b;
    a.features.values = test::random_matrix<float>(rng, 6, 9);
    b.features.values = test::random_matrix<float>(rng, 6, 9);
    const double lambda = rng.beta(0.4, 0.4);
    Sample m = mixup(a, b, lambda);
    MatrixF lo = a.features.values.cwiseMin(b.features.values);
    MatrixF hi = a.features.values.cwiseMax(b.features.values);
    CHECK((m.features.values.array() >= lo.array() - 1e-6f).all());
    CHECK((m.features.values.array() <= hi.array() + 1e-6f).all());
  }
}

TEST_CASE("mixup rejects mismatched shapes") {
  Sample a = sample_with(1.0f, 0);
  Sample b;
  b.features.values = MatrixF::Zero(4, 6);
  CHECK_THROWS(mixup(a, b, 0.5));
}

TEST_CASE("class aware sampler balances a 90/10 split") {
  std::vector<int> labels(90, 0);
  labels.insert(labels.end(), 10, 1);
  ClassAwareSampler sampler(labels);
  Rng rng(2024);
  int ones = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ones += labels[sampler.next(rng)];
  CHECK(std::abs(ones / static_cast<double>(draws) - 0.5) <= 0.02);
}

TEST_CASE("class aware sampler on uniform and single classes") {
  std::vector<int> uniform;
  for (int c = 0; c < 4; ++c) uniform.insert(uniform.end(), 25, c);
  ClassAwareSampler s(uniform);
  Rng rng(6);
  std::vector<int> hits(4, 0);
  for (int i = 0; i < 8000; ++i) ++hits[uniform[s.next(rng)]];
  for (int h : hits) CHECK(std::abs(h / 8000.0 - 0.25) <= 0.02);

  std::vector<int> single(7, 3);
  ClassAwareSampler one(single);
  for (int i = 0; i < 50; ++i) CHECK(single[one.next(rng)] == 3);
}

TEST_CASE("class aware sampler rejects an empty class") {
  std::vector<int> labels{0, 0, 2};
  CHECK_THROWS_WITH_AS(ClassAwareSampler(labels, 3), doctest::Contains("1"), Error);
}

TEST_CASE("dialect transfer with equal LTAS keeps features") {
  Rng rng(9);
  Sample s;
  s.features = random_mel(rng, 8, 20);
  s.species = 4;
  std::vector<double> l(8, -3.0);
  Sample out = dialect_transfer(s, l, l, 2);
  CHECK(out.features.values == s.features.values);
  CHECK(out.synthetic);
  CHECK(out.weight == kSyntheticWeight);
  CHECK(out.region == 2);
  CHECK(out.species == 4);
}

TEST_CASE("dialect transfer moves the mean spectrum to the target") {
  Rng rng(10);
  const int bins = 16;
  std::vector<double> src(bins), tgt(bins);
  for (int f = 0; f < bins; ++f) {
    src[f] = -10.0 + 0.5 * f;
    tgt[f] = -4.0 - 0.3 * f;
  }
  std::vector<MelSpectrogram> outs;
  for (int k = 0; k < 400; ++k) {
    Sample s;
    s.features.values = test::random_matrix<float>(rng, bins, 30, 2.0);
    for (int f = 0; f < bins; ++f) s.features.values.row(f).array() += static_cast<float>(src[f]);
    outs.push_back(dialect_transfer(s, src, tgt, 1).features);
  }
  std::vector<const MelSpectrogram*> ptrs;
  for (const auto& m : outs) ptrs.push_back(&m);
  std::vector<double> got = ltas(ptrs);
  REQUIRE(got.size() == static_cast<std::size_t>(bins));
  for (int f = 0; f < bins; ++f) CHECK(std::abs(got[f] - tgt[f]) <= 0.05);
}

TEST_CASE("dialect transfer preserves row autocorrelation") {
  Rng rng(12);
  Sample s;
  s.features = random_mel(rng, 10, 40);
  std::vector<double> a(10), b(10);
  for (int f = 0; f < 10; ++f) {
    a[f] = rng.normal();
    b[f] = 5.0 * rng.normal();
  }
  Sample out = dialect_transfer(s, a, b, 0);
  for (Eigen::Index f = 0; f < 10; ++f) {
    CHECK(autocorr(out.features.values, f) ==
          doctest::Approx(autocorr(s.features.values, f)).epsilon(1e-5));
  }
}

TEST_CASE("augmentation stream is reproducible for a fixed seed") {
  Rng data_rng(13);
  MelSpectrogram x = random_mel(data_rng);
  Waveform w = tone(800.0, 0.5);
  AugmentConfig cfg;
  auto run = [&](std::uint64_t seed) {
    Rng rng(seed);
    Waveform n = add_noise(w, rng.uniform(10, 30), rng);
    MelSpectrogram m = spec_augment(x, cfg, rng);
    return std::make_pair(n.samples, m.values);
  };
  auto a = run(77), b = run(77), c = run(78);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  CHECK(a.first != c.first);
}

TEST_CASE("augment config validation") {
  AugmentConfig ok;
  CHECK_NOTHROW(ok.validate());
  AugmentConfig bad = ok;
  bad.apply_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.noise_snr_db_min = 40.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ok;
  bad.mixup_alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}
