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

#include "dca/explain.hpp"

#include "dca/rng.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

namespace dca {
namespace {

void normalize_max(MatrixD& m) {
  double mx = m.size() > 0 ? m.maxCoeff() : 0.0;
  if (mx > 0.0) m /= mx;
}

MatrixF stack_inputs(std::span<const MatrixF* const> inputs) {
  const MatrixF& first = *inputs.front();
  MatrixF x(first.rows(), first.cols() * static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i]->rows() != first.rows() || inputs[i]->cols() != first.cols()) {
      throw Error("scorer inputs differ in shape");
    }
    x.middleCols(static_cast<Eigen::Index>(i) * first.cols(), first.cols()) = *inputs[i];
  }
  return x;
}

void write_pgm(const std::filesystem::path& path, int width, int height,
               const std::vector<unsigned char>& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path.string());
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

std::vector<double> Scorer::baseline(int n_bins) const {
  return std::vector<double>(static_cast<std::size_t>(n_bins), 0.0);
}

ModelScorer::ModelScorer(ModelState<float> model) : model_(std::move(model)) {}

int ModelScorer::n_classes() const { return model_.topology.n_species; }

std::vector<double> ModelScorer::score(std::span<const MatrixF* const> inputs, int c) const {
  if (c < 0 || c >= n_classes()) throw Error("class index out of range");
  std::vector<double> out;
  if (inputs.empty()) return out;
  const int frames = static_cast<int>(inputs.front()->cols());
  ForwardResult<float> r = forward(model_, stack_inputs(inputs), frames, false);
  for (Eigen::Index b = 0; b < r.species_logits.cols(); ++b) out.push_back(r.species_logits(c, b));
  return out;
}

CamSignal ModelScorer::cam_signal(const MatrixF& input, int c) const {
  if (c < 0 || c >= n_classes()) throw Error("class index out of range");
  const int frames = static_cast<int>(input.cols());
  ForwardCache<float> cache;
  ForwardResult<float> r = forward(model_, input, frames, false, &cache);
  MatrixF ds = MatrixF::Zero(r.species_logits.rows(), 1);
  ds(c, 0) = 1.0f;
  MatrixF dd = MatrixF::Zero(r.domain_logits.rows(), 1);
  MatrixF g;
  backward<float>(model_, cache, ds, dd, 0.0f, nullptr, &g);
  return {cache.activations.front().cast<double>(), g.cast<double>()};
}

std::vector<double> ModelScorer::baseline(int n_bins) const {
  if (model_.feature_mean.size() != n_bins) return Scorer::baseline(n_bins);
  std::vector<double> b(static_cast<std::size_t>(n_bins));
  for (int i = 0; i < n_bins; ++i) b[i] = model_.feature_mean[i];
  return b;
}

int ModelScorer::predict(const MatrixF& input) const {
  ForwardResult<float> r = forward(model_, input, static_cast<int>(input.cols()), false);
  Eigen::Index arg = 0;
  r.species_logits.col(0).maxCoeff(&arg);
  return static_cast<int>(arg);
}

LinearScorer::LinearScorer(MatrixD weights, double bias)
    : weights_{std::move(weights)}, biases_{bias}, shared_(true) {}

LinearScorer::LinearScorer(std::vector<MatrixD> per_class, std::vector<double> biases)
    : weights_(std::move(per_class)), biases_(std::move(biases)) {
  if (weights_.empty() || weights_.size() != biases_.size()) {
    throw Error("linear scorer needs one bias per class weight");
  }
}

const MatrixD& LinearScorer::weight(int c) const {
  if (shared_) return weights_.front();
  if (c < 0 || c >= n_classes()) throw Error("class index out of range");
  return weights_[c];
}

std::vector<double> LinearScorer::score(std::span<const MatrixF* const> inputs, int c) const {
  const MatrixD& w = weight(c);
  double b = shared_ ? biases_.front() : biases_[c];
  std::vector<double> out;
  for (const MatrixF* x : inputs) {
    if (x->rows() != w.rows() || x->cols() != w.cols()) throw Error("linear scorer shape mismatch");
    out.push_back((w.array() * x->cast<double>().array()).sum() + b);
  }
  return out;
}

CamSignal LinearScorer::cam_signal(const MatrixF& input, int c) const {
  const MatrixD& w = weight(c);
  if (input.rows() != w.rows() || input.cols() != w.cols()) {
    throw Error("linear scorer shape mismatch");
  }
  return {input.cast<double>(), w};
}

SaliencyMap grad_cam(const Scorer& scorer, const MelSpectrogram& x, int target_class) {
  CamSignal s = scorer.cam_signal(x.values, target_class);
  if (s.activation.rows() != s.gradient.rows() || s.activation.cols() != s.gradient.cols()) {
    throw Error("grad-cam activation and gradient shapes differ");
  }
  Eigen::VectorXd w = s.gradient.rowwise().mean();
  SaliencyMap m;
  m.method = "gradcam";
  m.target_class = target_class;
  m.values = (s.activation.array().colwise() * w.array()).cwiseMax(0.0).matrix();
  normalize_max(m.values);
  return m;
}

TileGrid TileGrid::make(int rows, int cols, int n_f, int n_t) {
  if (n_f < 1 || n_t < 1 || n_f > rows || n_t > cols) {
    throw ConfigError("tile grid does not fit the spectrogram");
  }
  TileGrid g;
  g.n_f = n_f;
  g.n_t = n_t;
  g.tile_f = (rows + n_f - 1) / n_f;
  g.tile_t = (cols + n_t - 1) / n_t;
  if ((n_f - 1) * g.tile_f >= rows || (n_t - 1) * g.tile_t >= cols) {
    throw ConfigError("tile grid leaves an empty tile");
  }
  return g;
}

void LimeConfig::validate(int n_mels, int frames) const {
  TileGrid::make(n_mels, frames, tiles_f, tiles_t);
  if (n_perturbations < tiles_f * tiles_t) {
    throw ConfigError("lime needs at least one perturbation per tile");
  }
  if (!(kernel_width > 0.0)) throw ConfigError("lime kernel width must be positive");
  if (!(ridge_lambda >= 0.0)) throw ConfigError("lime ridge lambda must be non-negative");
  if (!baseline.empty() && static_cast<int>(baseline.size()) != n_mels) {
    throw ConfigError("lime baseline length must equal the number of mel bins");
  }
}

LimeResult lime(const Scorer& scorer, const MelSpectrogram& x, int target_class,
                const LimeConfig& cfg) {
  const int rows = x.n_mels();
  const int cols = x.n_frames();
  cfg.validate(rows, cols);
  const TileGrid grid = TileGrid::make(rows, cols, cfg.tiles_f, cfg.tiles_t);
  const int K = grid.n_f * grid.n_t;
  const int N = cfg.n_perturbations;
  std::vector<double> base = cfg.baseline.empty() ? scorer.baseline(rows) : cfg.baseline;

  // Masks are drawn up front so scoring order cannot affect them.
  Eigen::MatrixXd Z(N, K + 1);
  Rng rng(cfg.rng_seed);
  for (int i = 0; i < N; ++i) {
    for (int k = 0; k < K; ++k) Z(i, k) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    Z(i, K) = 1.0;
  }

  Eigen::VectorXd y(N);
  constexpr int kChunk = 16;
  const int n_chunks = (N + kChunk - 1) / kChunk;
  parallel_for(n_chunks, [&](int chunk) {
    int begin = chunk * kChunk;
    int end = std::min(N, begin + kChunk);
    std::vector<MatrixF> perturbed(static_cast<std::size_t>(end - begin), x.values);
    std::vector<const MatrixF*> ptrs;
    for (int i = begin; i < end; ++i) {
      MatrixF& p = perturbed[i - begin];
      for (int tf = 0; tf < grid.n_f; ++tf) {
        for (int tt = 0; tt < grid.n_t; ++tt) {
          if (Z(i, tf * grid.n_t + tt) != 0.0) continue;
          int r0 = grid.row_begin(tf);
          int r1 = std::min(rows, r0 + grid.tile_f);
          int c0 = grid.col_begin(tt);
          int c1 = std::min(cols, c0 + grid.tile_t);
          for (int r = r0; r < r1; ++r) {
            p.row(r).segment(c0, c1 - c0).setConstant(static_cast<float>(base[r]));
          }
        }
      }
      ptrs.push_back(&p);
    }
    std::vector<double> s = scorer.score(ptrs, target_class);
    for (int i = begin; i < end; ++i) y[i] = s[i - begin];
  });

  Eigen::VectorXd pi(N);
  for (int i = 0; i < N; ++i) {
    double kept = Z.row(i).head(K).sum() / K;
    double d = 1.0 - kept;
    pi[i] = std::exp(-(d * d) / (cfg.kernel_width * cfg.kernel_width));
  }
  const Eigen::MatrixXd ZtW = Z.transpose() * pi.asDiagonal();
  const Eigen::MatrixXd gram = ZtW * Z;
  const Eigen::VectorXd rhs = ZtW * y;

  LimeResult result;
  double lambda = cfg.ridge_lambda;
  Eigen::VectorXd beta;
  for (int attempt = 0;; ++attempt) {
    Eigen::MatrixXd A = gram;
    // The intercept is not penalised.
    A.diagonal().head(K).array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-12;
    if (ok) {
      beta = ldlt.solve(rhs);
      ok = beta.allFinite();
    }
    if (ok) break;
    if (attempt == 1) {
      throw Error("lime regression is degenerate even with ridge lambda " + std::to_string(lambda));
    }
    lambda = lambda > 0.0 ? lambda * 10.0 : 1e-3;
  }
  result.ridge_used = lambda;
  result.intercept = beta[K];
  result.weights.resize(grid.n_f, grid.n_t);
  for (int tf = 0; tf < grid.n_f; ++tf) {
    for (int tt = 0; tt < grid.n_t; ++tt) result.weights(tf, tt) = beta[tf * grid.n_t + tt];
  }
  result.map.method = "lime";
  result.map.target_class = target_class;
  result.map.values = MatrixD::Zero(rows, cols);
  for (int tf = 0; tf < grid.n_f; ++tf) {
    for (int tt = 0; tt < grid.n_t; ++tt) {
      double w = std::max(0.0, result.weights(tf, tt));
      int r0 = grid.row_begin(tf);
      int c0 = grid.col_begin(tt);
      int r1 = std::min(rows, r0 + grid.tile_f);
      int c1 = std::min(cols, c0 + grid.tile_t);
      result.map.values.block(r0, c0, r1 - r0, c1 - c0).setConstant(w);
    }
  }
  normalize_max(result.map.values);
  return result;
}

void write_tile_weights(const std::filesystem::path& path, const LimeResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "tile_f,tile_t,weight\n" << std::setprecision(10);
  for (Eigen::Index f = 0; f < result.weights.rows(); ++f) {
    for (Eigen::Index t = 0; t < result.weights.cols(); ++t) {
      out << f << "," << t << "," << result.weights(f, t) << "\n";
    }
  }
  if (!out) throw IoError("failed writing " + path.string());
}

void render(const SaliencyMap& map, const MelSpectrogram& x, const std::filesystem::path& map_path,
            const std::filesystem::path& side_by_side_path) {
  const int h = static_cast<int>(map.values.rows());
  const int w = static_cast<int>(map.values.cols());
  if (x.n_mels() != h || x.n_frames() != w) throw Error("render: map and spectrogram shapes differ");

  std::vector<unsigned char> px(static_cast<std::size_t>(w) * h);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) px[static_cast<std::size_t>(r) * w + c] = to_byte(map.values(h - 1 - r, c));
  }
  write_pgm(map_path, w, h, px);

  const double lo = x.values.minCoeff();
  const double hi = x.values.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<unsigned char> side(static_cast<std::size_t>(2 * w) * h);
  for (int r = 0; r < h; ++r) {
    int bin = h - 1 - r;
    for (int c = 0; c < w; ++c) {
      double spec = (x.values(bin, c) - lo) / span;
      std::size_t row = static_cast<std::size_t>(r) * 2 * w;
      side[row + c] = to_byte(spec);
      side[row + w + c] = to_byte(0.4 * spec + 0.6 * map.values(bin, c));
    }
  }
  write_pgm(side_by_side_path, 2 * w, h, side);
}

double saliency_overlap(const SaliencyMap& a, const SaliencyMap& b) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
    throw Error("saliency maps differ in shape");
  }
  double na = a.values.norm();
  double nb = b.values.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp((a.values.array() * b.values.array()).sum() / (na * nb), 0.0, 1.0);
}

}  // namespace dca
