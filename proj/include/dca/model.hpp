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
#include "dca/normalization.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dca {

struct LayerSpec {
  int context = 1;
  int dilation = 1;
  int channels = 256;

  bool operator==(const LayerSpec&) const = default;
};

struct Topology {
  int n_mels = kNumMels;
  std::vector<LayerSpec> layers = {
      {5, 1, 256}, {3, 2, 256}, {3, 3, 256}, {1, 1, 256}, {1, 1, 512}};
  int embedding_dim = 64;
  int n_species = kNumSpecies;
  int n_regions = kNumRegions;
  NormKind norm = NormKind::kIfn;
  int group_size = 16;

  int pooled_dim() const { return 2 * layers.back().channels; }
  std::string describe() const;
  void validate() const;

  bool operator==(const Topology&) const = default;
};

// Dilated 1-D convolution over time; weight is out x (context * in), with the
// context taps stacked as row blocks of the input.
template <typename S>
struct TdnnLayer {
  Matrix<S> weight;
  Vector<S> bias;
  int context = 1;
  int dilation = 1;
};

template <typename S>
struct AffineLayer {
  Matrix<S> weight;
  Vector<S> bias;
};

template <typename S>
struct ModelState {
  Topology topology;
  NormState<S> norm;
  std::vector<TdnnLayer<S>> tdnn;
  AffineLayer<S> embedding;
  AffineLayer<S> species_head;
  AffineLayer<S> domain_head;
  // Per-bin mean of the training features; the LIME perturbation baseline.
  Vector<S> feature_mean;

  // He-uniform weights, zero biases.
  static ModelState initialize(const Topology& topology, std::uint64_t seed);

  template <typename T>
  ModelState<T> cast() const;

  // Learnable parameters, in a fixed order shared with ModelGrads::blocks().
  std::vector<ParamBlock<S>> parameters();
  // Non-learnable state (running statistics, feature mean).
  std::vector<ParamBlock<S>> buffers();
};

template <typename S>
struct ModelGrads {
  NormGrads<S> norm;
  std::vector<TdnnLayer<S>> tdnn;
  AffineLayer<S> embedding;
  AffineLayer<S> species_head;
  AffineLayer<S> domain_head;

  static ModelGrads zeros_like(const ModelState<S>& state);
  std::vector<ParamBlock<S>> blocks();
};

template <typename S>
struct ForwardCache {
  int batch = 0;
  int frames = 0;
  NormCache<S> norm;
  // activations[0] is the normalized spectrogram batch; activations[i + 1]
  // is the post-ReLU output of TDNN layer i.
  std::vector<Matrix<S>> activations;
  Matrix<S> pooled;     // 2C x B
  Matrix<S> embedding;  // post-ReLU, E x B
};

template <typename S>
struct ForwardResult {
  Matrix<S> species_logits;  // n_species x B
  Matrix<S> domain_logits;   // n_regions x B
};

// Input is n_mels x (batch * frames). Training mode updates the
// normalizer's running statistics.
template <typename S>
ForwardResult<S> forward(ModelState<S>& state, const Matrix<S>& input, int frames, bool training,
                         ForwardCache<S>* cache = nullptr);

// Exact gradients. The extractor receives the species gradient plus
// -lambda times the domain gradient (gradient reversal). If input_grad is
// non-null it receives d(loss)/d(input); normalized_grad receives the
// gradient at the normalizer output (activations[0]).
template <typename S>
ModelGrads<S> backward(const ModelState<S>& state, const ForwardCache<S>& cache,
                       const Matrix<S>& species_grad, const Matrix<S>& domain_grad, S lambda,
                       Matrix<S>* input_grad = nullptr, Matrix<S>* normalized_grad = nullptr);

// Gradient reversal: identity forward, -lambda * upstream backward.
template <typename S>
Matrix<S> grl_forward(const Matrix<S>& x) {
  return x;
}
template <typename S>
Matrix<S> grl_backward(const Matrix<S>& upstream, S lambda) {
  return -lambda * upstream;
}

struct GrlSchedule {
  double lambda_start = 0.1;
  double lambda_end = 1.0;
  int warmup_epochs = 10;

  // Piecewise linear in the (0-based) epoch index, constant after warm-up.
  double lambda(int epoch) const;
};

// Per-channel mean and population std (sqrt(var + 1e-8)) over time, for each
// sample of a C x (batch * frames) activation. Returns 2C x batch.
template <typename S>
Matrix<S> stats_pool(const Matrix<S>& h, int frames);
template <typename S>
Matrix<S> stats_pool_backward(const Matrix<S>& h, const Matrix<S>& pooled,
                              const Matrix<S>& upstream, int frames);

// Checkpoints: "DCAB", u32 version, topology descriptor, then named blocks of
// little-endian float32. Loading validates everything before returning.
std::vector<unsigned char> serialize_checkpoint(const ModelState<float>& state);
ModelState<float> deserialize_checkpoint(std::span<const unsigned char> bytes);
// Also writes a human-readable topology sidecar at <path>.topology.txt.
void save_checkpoint(const ModelState<float>& state, const std::filesystem::path& path);
ModelState<float> load_checkpoint(const std::filesystem::path& path);

// Throws unless the checkpoint heads match the requested label space.
void check_label_space(const Topology& topology, int n_species, int n_regions);

}  // namespace dca
