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

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

namespace dca {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;
using VectorF = Vector<float>;
using VectorD = Vector<double>;

inline constexpr int kSampleRate = 16000;
inline constexpr int kClipSeconds = 8;
inline constexpr int kClipSamples = kSampleRate * kClipSeconds;
inline constexpr int kNumMels = 128;
inline constexpr int kFftSize = 2048;
inline constexpr int kHopLength = 512;
inline constexpr int kNumFrames = 1 + kClipSamples / kHopLength;  // 251
inline constexpr int kNumSpecies = 10;
inline constexpr int kNumRegions = 3;

// Runtime failures (bad input data, I/O, numerical breakdown).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A named view of one contiguous block of model state.
template <typename S>
struct ParamBlock {
  std::string name;
  std::span<S> values;
};

// 64-bit FNV-1a, used for content-addressed caches.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                           std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v);

// Worker count: DCA_THREADS if set, else hardware concurrency (at least 1).
int worker_count();

// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index is
// visited exactly once; results must not depend on scheduling order.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace dca
