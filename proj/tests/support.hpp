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

// Shared helpers for the unit tests.

#pragma once

#include "dca/common.hpp"
#include "dca/rng.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dca::test {

inline std::vector<float> sine(double freq, int rate, double seconds, double amp = 0.5) {
  std::vector<float> x(static_cast<std::size_t>(std::lround(seconds * rate)));
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<float>(amp * std::sin(2.0 * M_PI * freq * static_cast<double>(i) / rate));
  }
  return x;
}

// Frequency (Hz) of the largest DFT magnitude bin, and the bin width.
inline std::pair<double, double> dft_peak(std::span<const float> x, int rate) {
  std::vector<double> v(x.begin(), x.end());
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, v);
  std::size_t best = 1;
  for (std::size_t k = 1; k < v.size() / 2; ++k) {
    if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
  }
  double df = static_cast<double>(rate) / static_cast<double>(v.size());
  return {best * df, df};
}

template <typename S>
Matrix<S> random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Matrix<S> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<S>(scale * rng.normal());
  }
  return m;
}

// Relative error between analytic and numeric gradients of one block.
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
  return std::sqrt(diff) / denom;
}

// Central differences of f with respect to every entry of `values`.
inline std::vector<double> numeric_gradient(std::span<double> values,
                                            const std::function<double()>& f,
                                            double step = 1e-5) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = f();
    values[i] = saved - step;
    const double down = f();
    values[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kFdStep = 1e-5;

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("dca_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace dca::test
