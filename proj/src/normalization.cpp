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

#include "dca/normalization.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace dca {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

template <typename S>
S sigmoid(S v) {
  return S(1) / (S(1) + std::exp(-v));
}

// Standardize each row over all columns (BatchNorm core, training mode).
template <typename S>
void bn_core_train(const Matrix<S>& x, S eps, Matrix<S>& out, Vector<S>& inv_std,
                   Vector<S>& mean, Vector<S>& var) {
  const auto n = static_cast<S>(x.cols());
  mean = x.rowwise().sum() / n;
  out = x.colwise() - mean;
  var = out.array().square().rowwise().sum() / n;
  inv_std = (var.array() + eps).rsqrt();
  out = inv_std.asDiagonal() * out;
}

// Standardize each row within each sample's time span (IFN core).
template <typename S>
void ifn_core(const Matrix<S>& x, int frames, S eps, Matrix<S>& out, Matrix<S>& inv_std) {
  const Eigen::Index batch = x.cols() / frames;
  out.resize(x.rows(), x.cols());
  inv_std.resize(x.rows(), batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    auto seg = x.middleCols(b * frames, frames);
    const Vector<S> mean = seg.rowwise().sum() / static_cast<S>(frames);
    auto dst = out.middleCols(b * frames, frames);
    dst = seg.colwise() - mean;
    const Vector<S> var = dst.array().square().rowwise().sum() / static_cast<S>(frames);
    const Vector<S> is = (var.array() + eps).rsqrt();
    inv_std.col(b) = is;
    dst = is.asDiagonal() * dst;
  }
}

// Shared backward for "subtract mean, scale by inv_std" over n entries:
//   dx = inv_std / n * (n g - sum(g) - xhat * sum(g * xhat)).
template <typename Block, typename XhatBlock>
void standardize_backward_rows(const Block& g, const XhatBlock& xhat,
                               const Eigen::Ref<const Vector<typename Block::Scalar>>& inv_std,
                               Eigen::Ref<Matrix<typename Block::Scalar>> dx) {
  using S = typename Block::Scalar;
  const auto n = static_cast<S>(g.cols());
  const Vector<S> sum_g = g.rowwise().sum();
  const Vector<S> sum_gx = (g.array() * xhat.array()).rowwise().sum();
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    dx.row(r) = (inv_std(r) / n) *
                (n * g.row(r).array() - sum_g(r) - xhat.row(r).array() * sum_gx(r)).matrix();
  }
}

template <typename S>
Matrix<S> ifn_backward(const Matrix<S>& g, const Matrix<S>& xhat, const Matrix<S>& inv_std,
                       int frames) {
  Matrix<S> dx(g.rows(), g.cols());
  const Eigen::Index batch = g.cols() / frames;
  for (Eigen::Index b = 0; b < batch; ++b) {
    standardize_backward_rows(g.middleCols(b * frames, frames),
                              xhat.middleCols(b * frames, frames), inv_std.col(b),
                              dx.middleCols(b * frames, frames));
  }
  return dx;
}

template <typename S>
Matrix<S> bn_backward(const Matrix<S>& g, const Matrix<S>& xhat, const Vector<S>& inv_std,
                      bool training) {
  if (!training) return inv_std.asDiagonal() * g;
  Matrix<S> dx(g.rows(), g.cols());
  standardize_backward_rows(g, xhat, inv_std, dx);
  return dx;
}

}  // namespace

NormKind parse_norm_kind(std::string_view name) {
  const std::string s = lower(name);
  if (s == "bn" || s == "batchnorm" || s == "batch_norm") return NormKind::kBatchNorm;
  if (s == "gw" || s == "groupwhitening" || s == "group_whitening") {
    return NormKind::kGroupWhitening;
  }
  if (s == "tn" || s == "timenorm" || s == "time_norm") return NormKind::kTimeNorm;
  if (s == "ifn") return NormKind::kIfn;
  if (s == "rifn") return NormKind::kRifn;
  throw ConfigError("unknown normalizer '" + std::string(name) +
                    "' (expected bn|gw|tn|ifn|rifn)");
}

std::string norm_kind_name(NormKind kind) {
  switch (kind) {
    case NormKind::kBatchNorm: return "bn";
    case NormKind::kGroupWhitening: return "gw";
    case NormKind::kTimeNorm: return "tn";
    case NormKind::kIfn: return "ifn";
    case NormKind::kRifn: return "rifn";
  }
  return "?";
}

template <typename S>
NormState<S> NormState<S>::create(NormKind kind, int n_bins, int group_size) {
  if (kind == NormKind::kGroupWhitening && (group_size <= 0 || n_bins % group_size != 0)) {
    throw ConfigError("group whitening: " + std::to_string(n_bins) +
                      " bins not divisible by group_size " + std::to_string(group_size));
  }
  NormState s;
  s.kind = kind;
  s.n_bins = n_bins;
  s.group_size = group_size;
  s.gamma = Vector<S>::Ones(n_bins);
  s.beta = Vector<S>::Zero(n_bins);
  s.running_mean = Vector<S>::Zero(n_bins);
  s.running_var = Vector<S>::Ones(n_bins);
  s.gate_logits = Vector<S>::Zero(kind == NormKind::kRifn ? n_bins : 0);
  if (kind == NormKind::kGroupWhitening) {
    s.running_cov.assign(static_cast<std::size_t>(n_bins / group_size),
                         Matrix<S>::Identity(group_size, group_size));
  }
  return s;
}

template <typename S>
template <typename T>
NormState<T> NormState<S>::cast() const {
  NormState<T> o;
  o.kind = kind;
  o.n_bins = n_bins;
  o.group_size = group_size;
  o.eps = static_cast<T>(eps);
  o.momentum = static_cast<T>(momentum);
  o.gamma = gamma.template cast<T>();
  o.beta = beta.template cast<T>();
  o.running_mean = running_mean.template cast<T>();
  o.running_var = running_var.template cast<T>();
  o.gate_logits = gate_logits.template cast<T>();
  for (const auto& c : running_cov) o.running_cov.push_back(c.template cast<T>());
  return o;
}

template <typename S>
std::vector<ParamBlock<S>> NormState<S>::parameters() {
  std::vector<ParamBlock<S>> p{{"norm.gamma", {gamma.data(), static_cast<std::size_t>(gamma.size())}},
                               {"norm.beta", {beta.data(), static_cast<std::size_t>(beta.size())}}};
  if (kind == NormKind::kRifn) {
    p.push_back({"norm.gate", {gate_logits.data(), static_cast<std::size_t>(gate_logits.size())}});
  }
  return p;
}

template <typename S>
std::vector<ParamBlock<S>> NormState<S>::buffers() {
  std::vector<ParamBlock<S>> p{
      {"norm.running_mean", {running_mean.data(), static_cast<std::size_t>(running_mean.size())}},
      {"norm.running_var", {running_var.data(), static_cast<std::size_t>(running_var.size())}}};
  for (std::size_t g = 0; g < running_cov.size(); ++g) {
    p.push_back({"norm.running_cov." + std::to_string(g),
                 {running_cov[g].data(), static_cast<std::size_t>(running_cov[g].size())}});
  }
  return p;
}

template <typename S>
NormGrads<S> NormGrads<S>::zeros_like(const NormState<S>& state) {
  return {Vector<S>::Zero(state.gamma.size()), Vector<S>::Zero(state.beta.size()),
          Vector<S>::Zero(state.gate_logits.size())};
}

template <typename S>
std::vector<ParamBlock<S>> NormGrads<S>::blocks() {
  std::vector<ParamBlock<S>> p{{"norm.gamma", {gamma.data(), static_cast<std::size_t>(gamma.size())}},
                               {"norm.beta", {beta.data(), static_cast<std::size_t>(beta.size())}}};
  if (gate_logits.size() > 0) {
    p.push_back({"norm.gate", {gate_logits.data(), static_cast<std::size_t>(gate_logits.size())}});
  }
  return p;
}

template <typename S>
Matrix<S> newton_schulz_inv_sqrt(const Matrix<S>& a, int iterations, WhiteningCache<S>* cache) {
  const Eigen::Index g = a.rows();
  const S frob = a.norm();
  const Matrix<S> scaled = a / frob;
  std::vector<Matrix<S>> iterates;
  iterates.reserve(static_cast<std::size_t>(iterations + 1));
  iterates.push_back(Matrix<S>::Identity(g, g));
  for (int k = 0; k < iterations; ++k) {
    const Matrix<S>& p = iterates.back();
    const Matrix<S> p3 = p * p * p;
    iterates.push_back(S(1.5) * p - S(0.5) * (p3 * scaled));
  }
  Matrix<S> w = iterates.back() / std::sqrt(frob);
  if (cache) {
    cache->cov = a;
    cache->frob = frob;
    cache->scaled_cov = scaled;
    cache->iterates = std::move(iterates);
    cache->whitening = w;
  }
  return w;
}

template <typename S>
Matrix<S> norm_forward(NormState<S>& state, const Matrix<S>& x, int frames, bool training,
                       NormCache<S>* cache) {
  if (x.rows() != state.n_bins) {
    throw Error("normalizer expects " + std::to_string(state.n_bins) + " bins, got " +
                std::to_string(x.rows()));
  }
  if (frames <= 0 || x.cols() % frames != 0) throw Error("normalizer: bad frame layout");
  NormCache<S> local;
  NormCache<S>& c = cache ? *cache : local;
  c = NormCache<S>{};
  c.kind = state.kind;
  c.training = training;
  c.frames = frames;
  const S m = state.momentum;

  auto bn = [&](Matrix<S>& out) {
    if (training) {
      Vector<S> mean, var;
      bn_core_train(x, state.eps, out, c.bn_inv_std, mean, var);
      state.running_mean = (S(1) - m) * state.running_mean + m * mean;
      state.running_var = (S(1) - m) * state.running_var + m * var;
    } else {
      c.bn_inv_std = (state.running_var.array() + state.eps).rsqrt();
      out = c.bn_inv_std.asDiagonal() * (x.colwise() - state.running_mean);
    }
  };

  switch (state.kind) {
    case NormKind::kBatchNorm:
      bn(c.normalized);
      break;
    case NormKind::kIfn:
      ifn_core(x, frames, state.eps, c.normalized, c.ifn_inv_std);
      break;
    case NormKind::kTimeNorm: {
      const auto f = static_cast<S>(x.rows());
      const Eigen::Matrix<S, 1, Eigen::Dynamic> mean = x.colwise().sum() / f;
      c.normalized = x.rowwise() - mean;
      const Eigen::Matrix<S, 1, Eigen::Dynamic> var =
          c.normalized.array().square().colwise().sum() / f;
      c.tn_inv_std = (var.array() + state.eps).rsqrt().transpose();
      c.normalized = c.normalized * c.tn_inv_std.asDiagonal();
      break;
    }
    case NormKind::kRifn: {
      ifn_core(x, frames, state.eps, c.ifn_core, c.ifn_inv_std);
      bn(c.bn_core);
      c.gate = state.gate_logits.unaryExpr([](S v) { return sigmoid(v); });
      c.normalized = c.gate.asDiagonal() * c.ifn_core +
                     (Vector<S>::Ones(c.gate.size()) - c.gate).asDiagonal() * c.bn_core;
      break;
    }
    case NormKind::kGroupWhitening: {
      const int gs = state.group_size;
      const int n_groups = state.n_bins / gs;
      c.normalized.resize(x.rows(), x.cols());
      c.groups.resize(static_cast<std::size_t>(n_groups));
      const auto n = static_cast<S>(x.cols());
      for (int gi = 0; gi < n_groups; ++gi) {
        auto& gc = c.groups[static_cast<std::size_t>(gi)];
        auto xg = x.middleRows(gi * gs, gs);
        Matrix<S> eye = Matrix<S>::Identity(gs, gs);
        if (training) {
          const Vector<S> mean = xg.rowwise().sum() / n;
          gc.centered = xg.colwise() - mean;
          const Matrix<S> sigma = gc.centered * gc.centered.transpose() / n;
          newton_schulz_inv_sqrt<S>(sigma + state.eps * eye, kNewtonSchulzIterations, &gc);
          state.running_mean.segment(gi * gs, gs) =
              (S(1) - m) * state.running_mean.segment(gi * gs, gs) + m * mean;
          auto& rc = state.running_cov[static_cast<std::size_t>(gi)];
          rc = (S(1) - m) * rc + m * sigma;
          state.running_var.segment(gi * gs, gs) = rc.diagonal();
        } else {
          gc.centered = xg.colwise() - state.running_mean.segment(gi * gs, gs);
          newton_schulz_inv_sqrt<S>(
              state.running_cov[static_cast<std::size_t>(gi)] + state.eps * eye,
              kNewtonSchulzIterations, &gc);
        }
        c.normalized.middleRows(gi * gs, gs) = gc.whitening * gc.centered;
      }
      break;
    }
  }
  return (state.gamma.asDiagonal() * c.normalized).colwise() + state.beta;
}

template <typename S>
Matrix<S> norm_backward(const NormState<S>& state, const NormCache<S>& c,
                        const Matrix<S>& upstream, NormGrads<S>* grads) {
  if (grads) {
    grads->gamma += (upstream.array() * c.normalized.array()).rowwise().sum().matrix();
    grads->beta += upstream.rowwise().sum();
  }
  const Matrix<S> g = state.gamma.asDiagonal() * upstream;

  switch (c.kind) {
    case NormKind::kBatchNorm:
      return bn_backward(g, c.normalized, c.bn_inv_std, c.training);
    case NormKind::kIfn:
      return ifn_backward(g, c.normalized, c.ifn_inv_std, c.frames);
    case NormKind::kTimeNorm: {
      // Transposed view: columns become rows of the shared helper.
      const Matrix<S> gt = g.transpose();
      const Matrix<S> xt = c.normalized.transpose();
      Matrix<S> dxt(gt.rows(), gt.cols());
      standardize_backward_rows(gt, xt, c.tn_inv_std, dxt);
      return dxt.transpose();
    }
    case NormKind::kRifn: {
      if (grads) {
        const Vector<S> dgate =
            (g.array() * (c.ifn_core - c.bn_core).array()).rowwise().sum().matrix();
        grads->gate_logits +=
            (dgate.array() * c.gate.array() * (S(1) - c.gate.array())).matrix();
      }
      const Vector<S> one_minus = Vector<S>::Ones(c.gate.size()) - c.gate;
      return ifn_backward<S>(c.gate.asDiagonal() * g, c.ifn_core, c.ifn_inv_std, c.frames) +
             bn_backward<S>(one_minus.asDiagonal() * g, c.bn_core, c.bn_inv_std, c.training);
    }
    case NormKind::kGroupWhitening: {
      const int gs = state.group_size;
      Matrix<S> dx(g.rows(), g.cols());
      const auto n = static_cast<S>(g.cols());
      for (std::size_t gi = 0; gi < c.groups.size(); ++gi) {
        const auto& gc = c.groups[gi];
        const auto rows = static_cast<Eigen::Index>(gi) * gs;
        const Matrix<S> gy = g.middleRows(rows, gs);
        Matrix<S> dxc = gc.whitening.transpose() * gy;
        if (!c.training) {
          dx.middleRows(rows, gs) = dxc;
          continue;
        }
        const Matrix<S> dw = gy * gc.centered.transpose();
        const S inv_sqrt_n = S(1) / std::sqrt(gc.frob);
        const Matrix<S>& pk = gc.iterates.back();
        Matrix<S> dp = dw * inv_sqrt_n;
        S dfrob = (dw.array() * pk.array()).sum() * S(-0.5) * inv_sqrt_n / gc.frob;
        Matrix<S> dscaled = Matrix<S>::Zero(gs, gs);
        const Matrix<S>& an = gc.scaled_cov;
        for (std::size_t k = gc.iterates.size() - 1; k-- > 0;) {
          const Matrix<S>& p = gc.iterates[k];
          const Matrix<S> p2 = p * p;
          const Matrix<S> gm = S(-0.5) * dp;
          dscaled += (p2 * p).transpose() * gm;
          dp = S(1.5) * dp + gm * (p2 * an).transpose() + p.transpose() * gm * (p * an).transpose() +
               p2.transpose() * gm * an.transpose();
        }
        Matrix<S> da = dscaled / gc.frob;
        dfrob += -(dscaled.array() * gc.cov.array()).sum() / (gc.frob * gc.frob);
        da += dfrob * gc.cov / gc.frob;
        dxc += (da + da.transpose()) * gc.centered / n;
        const Vector<S> mean_dxc = dxc.rowwise().sum() / n;
        dx.middleRows(rows, gs) = dxc.colwise() - mean_dxc;
      }
      return dx;
    }
  }
  return g;
}

#define DCA_INSTANTIATE_NORM(S)                                                             \
  template struct NormState<S>;                                                             \
  template struct NormGrads<S>;                                                             \
  template Matrix<S> norm_forward<S>(NormState<S>&, const Matrix<S>&, int, bool,            \
                                     NormCache<S>*);                                        \
  template Matrix<S> norm_backward<S>(const NormState<S>&, const NormCache<S>&,             \
                                      const Matrix<S>&, NormGrads<S>*);                     \
  template Matrix<S> newton_schulz_inv_sqrt<S>(const Matrix<S>&, int, WhiteningCache<S>*);

DCA_INSTANTIATE_NORM(float)
DCA_INSTANTIATE_NORM(double)
#undef DCA_INSTANTIATE_NORM

template NormState<double> NormState<float>::cast<double>() const;
template NormState<float> NormState<double>::cast<float>() const;
template NormState<float> NormState<float>::cast<float>() const;
template NormState<double> NormState<double>::cast<double>() const;

}  // namespace dca
