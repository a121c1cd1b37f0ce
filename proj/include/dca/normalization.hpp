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

#include <string>
#include <string_view>
#include <vector>

namespace dca {

// Input normalizers. Every normalizer sees a batch laid out as an
// n_bins x (batch * frames) matrix: sample b owns columns
// [b * frames, (b + 1) * frames). Frequency is the channel axis.
enum class NormKind { kBatchNorm, kGroupWhitening, kTimeNorm, kIfn, kRifn };

// Accepts bn|gw|tn|ifn|rifn and the long names, case-insensitively.
NormKind parse_norm_kind(std::string_view name);
std::string norm_kind_name(NormKind kind);

inline constexpr int kNewtonSchulzIterations = 5;

template <typename S>
struct NormState {
  NormKind kind = NormKind::kIfn;
  int n_bins = kNumMels;
  int group_size = 16;
  S eps = S(1e-5);
  S momentum = S(0.1);

  Vector<S> gamma;
  Vector<S> beta;
  Vector<S> running_mean;
  Vector<S> running_var;
  // Pre-sigmoid per-bin gates (RIFN).
  Vector<S> gate_logits;
  // Per-group running covariance (group whitening).
  std::vector<Matrix<S>> running_cov;

  static NormState create(NormKind kind, int n_bins = kNumMels, int group_size = 16);

  template <typename T>
  NormState<T> cast() const;

  std::vector<ParamBlock<S>> parameters();
  std::vector<ParamBlock<S>> buffers();
};

template <typename S>
struct NormGrads {
  Vector<S> gamma;
  Vector<S> beta;
  Vector<S> gate_logits;

  static NormGrads zeros_like(const NormState<S>& state);
  std::vector<ParamBlock<S>> blocks();
};

template <typename S>
struct WhiteningCache {
  Matrix<S> centered;              // G x N
  Matrix<S> whitening;             // G x G
  std::vector<Matrix<S>> iterates; // P_0 .. P_K
  Matrix<S> scaled_cov;            // A / ||A||_F
  Matrix<S> cov;                   // A = Sigma + eps I
  S frob = S(0);
};

template <typename S>
struct NormCache {
  NormKind kind = NormKind::kIfn;
  bool training = false;
  int frames = 0;
  // Pre-affine normalized input.
  Matrix<S> normalized;
  // Per-bin (BatchNorm core) inverse std.
  Vector<S> bn_inv_std;
  Matrix<S> bn_core;
  // Per (bin, sample) inverse std (IFN core).
  Matrix<S> ifn_inv_std;
  Matrix<S> ifn_core;
  // Per column inverse std (TimeNorm).
  Vector<S> tn_inv_std;
  Vector<S> gate;
  std::vector<WhiteningCache<S>> groups;
};

// Forward pass. In training mode BatchNorm, RIFN and group whitening use
// batch statistics and update the running statistics in `state`.
template <typename S>
Matrix<S> norm_forward(NormState<S>& state, const Matrix<S>& x, int frames, bool training,
                       NormCache<S>* cache = nullptr);

// Exact gradient of the forward pass recorded in `cache`. Parameter
// gradients are accumulated into `grads` when non-null.
template <typename S>
Matrix<S> norm_backward(const NormState<S>& state, const NormCache<S>& cache,
                        const Matrix<S>& upstream, NormGrads<S>* grads);

// Inverse square root of a symmetric positive-definite matrix via
// Frobenius-scaled Newton-Schulz iterations. Returns A^{-1/2}.
template <typename S>
Matrix<S> newton_schulz_inv_sqrt(const Matrix<S>& a, int iterations = kNewtonSchulzIterations,
                                 WhiteningCache<S>* cache = nullptr);

}  // namespace dca
