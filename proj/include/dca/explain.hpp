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

#include "dca/frontend.hpp"
#include "dca/model.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dca {

struct SaliencyMap {
  MatrixD values;  // n_mels x frames, non-negative, max 1 unless all zero
  std::string method;
  int target_class = 0;
};

// What Grad-CAM needs from a model: the Mel-axis activation the map is drawn
// on and the gradient of the class logit with respect to it.
struct CamSignal {
  MatrixD activation;
  MatrixD gradient;
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual int n_classes() const = 0;
  // Class-c logit for each input.
  virtual std::vector<double> score(std::span<const MatrixF* const> inputs, int c) const = 0;
  virtual CamSignal cam_signal(const MatrixF& input, int c) const = 0;
  // Per-bin value substituted for masked LIME tiles.
  virtual std::vector<double> baseline(int n_bins) const;
};

// Wraps a trained model. The Grad-CAM activation is the normalized
// spectrogram entering the first TDNN layer.
class ModelScorer : public Scorer {
 public:
  explicit ModelScorer(ModelState<float> model);
  int n_classes() const override;
  std::vector<double> score(std::span<const MatrixF* const> inputs, int c) const override;
  CamSignal cam_signal(const MatrixF& input, int c) const override;
  // The model's stored training-feature mean.
  std::vector<double> baseline(int n_bins) const override;
  int predict(const MatrixF& input) const;

 private:
  // Only evaluated in inference mode, which leaves the state untouched.
  mutable ModelState<float> model_;
};

// logit_c = sum(W_c .* X) + b_c. A single weight matrix serves every class.
class LinearScorer : public Scorer {
 public:
  explicit LinearScorer(MatrixD weights, double bias = 0.0);
  LinearScorer(std::vector<MatrixD> per_class, std::vector<double> biases);
  int n_classes() const override { return static_cast<int>(weights_.size()); }
  std::vector<double> score(std::span<const MatrixF* const> inputs, int c) const override;
  CamSignal cam_signal(const MatrixF& input, int c) const override;

 private:
  const MatrixD& weight(int c) const;
  std::vector<MatrixD> weights_;
  std::vector<double> biases_;
  bool shared_ = false;
};

// w_f = mean_t d(logit_c)/dA(f, t); map = ReLU(w_f * A(f, t)), max-normalized.
SaliencyMap grad_cam(const Scorer& scorer, const MelSpectrogram& x, int target_class);

struct LimeConfig {
  int tiles_f = 8;
  int tiles_t = 8;
  int n_perturbations = 1000;
  double kernel_width = 0.25;
  double ridge_lambda = 1e-3;
  std::uint64_t rng_seed = 0;
  // Empty: use the scorer's baseline.
  std::vector<double> baseline;

  void validate(int n_mels, int frames) const;
};

struct TileGrid {
  int tile_f = 0;  // rows per tile (last may be ragged)
  int tile_t = 0;  // frames per tile
  int n_f = 0;
  int n_t = 0;

  static TileGrid make(int rows, int cols, int n_f, int n_t);
  int row_begin(int i) const { return i * tile_f; }
  int col_begin(int j) const { return j * tile_t; }
};

struct LimeResult {
  MatrixD weights;  // tiles_f x tiles_t, signed
  double intercept = 0.0;
  double ridge_used = 0.0;
  SaliencyMap map;  // weights broadcast to cells, negatives clipped
};

LimeResult lime(const Scorer& scorer, const MelSpectrogram& x, int target_class,
                const LimeConfig& cfg = {});

// Rows `tile_f,tile_t,weight`.
void write_tile_weights(const std::filesystem::path& path, const LimeResult& result);

// 8-bit binary PGM of the map (width = frames, height = mel bins, low
// frequencies at the bottom) and a second image with the spectrogram on the
// left and the overlay on the right.
void render(const SaliencyMap& map, const MelSpectrogram& x, const std::filesystem::path& map_path,
            const std::filesystem::path& side_by_side_path);

// Cosine similarity of flattened maps; 0 if either is all zero.
double saliency_overlap(const SaliencyMap& a, const SaliencyMap& b);

}  // namespace dca
