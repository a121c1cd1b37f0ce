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

#include "dca/model.hpp"

#include "dca/rng.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace dca {
namespace {

constexpr char kCheckpointMagic[4] = {'D', 'C', 'A', 'B'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr double kPoolEps = 1e-8;

template <typename S>
std::span<S> span_of(Matrix<S>& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}
template <typename S>
std::span<S> span_of(Vector<S>& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

template <typename S>
void he_uniform(Matrix<S>& w, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<S>(rng.uniform(-limit, limit));
  }
}

// Column offset of context tap k.
inline int tap_offset(int k, int context, int dilation) {
  return (k - (context - 1) / 2) * dilation;
}

// Stacks the shifted copies of x (zero outside each sample's time span).
template <typename S>
Matrix<S> unfold(const Matrix<S>& x, int frames, int context, int dilation) {
  if (context == 1) return x;
  const Eigen::Index c = x.rows();
  const Eigen::Index batch = x.cols() / frames;
  Matrix<S> cols = Matrix<S>::Zero(c * context, x.cols());
  for (int k = 0; k < context; ++k) {
    const int o = tap_offset(k, context, dilation);
    const int t0 = std::max(0, -o);
    const int t1 = std::min(frames, frames - o);
    if (t1 <= t0) continue;
    for (Eigen::Index b = 0; b < batch; ++b) {
      cols.block(k * c, b * frames + t0, c, t1 - t0) = x.middleCols(b * frames + t0 + o, t1 - t0);
    }
  }
  return cols;
}

template <typename S>
Matrix<S> fold(const Matrix<S>& cols, int frames, int context, int dilation, Eigen::Index c) {
  if (context == 1) return cols;
  const Eigen::Index batch = cols.cols() / frames;
  Matrix<S> x = Matrix<S>::Zero(c, cols.cols());
  for (int k = 0; k < context; ++k) {
    const int o = tap_offset(k, context, dilation);
    const int t0 = std::max(0, -o);
    const int t1 = std::min(frames, frames - o);
    if (t1 <= t0) continue;
    for (Eigen::Index b = 0; b < batch; ++b) {
      x.middleCols(b * frames + t0 + o, t1 - t0) += cols.block(k * c, b * frames + t0, c, t1 - t0);
    }
  }
  return x;
}

void put_u32(std::vector<unsigned char>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}
  std::uint32_t u32() {
    need(4);
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += 4;
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  float f32() {
    const std::uint32_t u = u32();
    float f;
    std::memcpy(&f, &u, 4);
    return f;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated");
  }
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string Topology::describe() const {
  std::ostringstream os;
  os << "n_mels " << n_mels << "\n";
  os << "norm " << norm_kind_name(norm) << "\n";
  if (norm == NormKind::kGroupWhitening) os << "group_size " << group_size << "\n";
  for (std::size_t i = 0; i < layers.size(); ++i) {
    os << "tdnn" << i + 1 << " context " << layers[i].context << " dilation "
       << layers[i].dilation << " channels " << layers[i].channels << " relu\n";
  }
  os << "stats_pool " << pooled_dim() << "\n";
  os << "embedding " << pooled_dim() << " -> " << embedding_dim << " relu\n";
  os << "species_head " << embedding_dim << " -> " << n_species << "\n";
  os << "domain_head grl " << embedding_dim << " -> " << n_regions << "\n";
  return os.str();
}

void Topology::validate() const {
  if (n_mels <= 0 || layers.empty() || embedding_dim <= 0 || n_species <= 0 || n_regions <= 0) {
    throw ConfigError("invalid topology");
  }
  for (const auto& l : layers) {
    if (l.context <= 0 || l.context % 2 == 0 || l.dilation <= 0 || l.channels <= 0) {
      throw ConfigError("invalid TDNN layer (context must be odd and positive)");
    }
  }
  if (norm == NormKind::kGroupWhitening && (group_size <= 0 || n_mels % group_size != 0)) {
    throw ConfigError("group whitening: n_mels not divisible by group_size");
  }
}

double GrlSchedule::lambda(int epoch) const {
  if (warmup_epochs <= 0 || epoch >= warmup_epochs) return lambda_end;
  if (epoch <= 0) return lambda_start;
  return lambda_start + (lambda_end - lambda_start) * epoch / warmup_epochs;
}

template <typename S>
ModelState<S> ModelState<S>::initialize(const Topology& topology, std::uint64_t seed) {
  topology.validate();
  Rng rng = Rng::derive(seed, 0x1417);
  ModelState m;
  m.topology = topology;
  m.norm = NormState<S>::create(topology.norm, topology.n_mels, topology.group_size);
  int in = topology.n_mels;
  for (const auto& spec : topology.layers) {
    TdnnLayer<S> l;
    l.context = spec.context;
    l.dilation = spec.dilation;
    l.weight.resize(spec.channels, spec.context * in);
    he_uniform(l.weight, spec.context * in, rng);
    l.bias = Vector<S>::Zero(spec.channels);
    m.tdnn.push_back(std::move(l));
    in = spec.channels;
  }
  auto affine = [&](int out_dim, int in_dim) {
    AffineLayer<S> a;
    a.weight.resize(out_dim, in_dim);
    he_uniform(a.weight, in_dim, rng);
    a.bias = Vector<S>::Zero(out_dim);
    return a;
  };
  m.embedding = affine(topology.embedding_dim, topology.pooled_dim());
  m.species_head = affine(topology.n_species, topology.embedding_dim);
  m.domain_head = affine(topology.n_regions, topology.embedding_dim);
  m.feature_mean = Vector<S>::Zero(topology.n_mels);
  return m;
}

template <typename S>
template <typename T>
ModelState<T> ModelState<S>::cast() const {
  ModelState<T> o;
  o.topology = topology;
  o.norm = norm.template cast<T>();
  for (const auto& l : tdnn) {
    o.tdnn.push_back({l.weight.template cast<T>(), l.bias.template cast<T>(), l.context, l.dilation});
  }
  auto ca = [](const AffineLayer<S>& a) {
    return AffineLayer<T>{a.weight.template cast<T>(), a.bias.template cast<T>()};
  };
  o.embedding = ca(embedding);
  o.species_head = ca(species_head);
  o.domain_head = ca(domain_head);
  o.feature_mean = feature_mean.template cast<T>();
  return o;
}

template <typename S>
std::vector<ParamBlock<S>> ModelState<S>::parameters() {
  std::vector<ParamBlock<S>> p = norm.parameters();
  for (std::size_t i = 0; i < tdnn.size(); ++i) {
    p.push_back({"tdnn" + std::to_string(i + 1) + ".weight", span_of(tdnn[i].weight)});
    p.push_back({"tdnn" + std::to_string(i + 1) + ".bias", span_of(tdnn[i].bias)});
  }
  p.push_back({"embedding.weight", span_of(embedding.weight)});
  p.push_back({"embedding.bias", span_of(embedding.bias)});
  p.push_back({"species_head.weight", span_of(species_head.weight)});
  p.push_back({"species_head.bias", span_of(species_head.bias)});
  p.push_back({"domain_head.weight", span_of(domain_head.weight)});
  p.push_back({"domain_head.bias", span_of(domain_head.bias)});
  return p;
}

template <typename S>
std::vector<ParamBlock<S>> ModelState<S>::buffers() {
  std::vector<ParamBlock<S>> b = norm.buffers();
  b.push_back({"feature_mean", span_of(feature_mean)});
  return b;
}

template <typename S>
ModelGrads<S> ModelGrads<S>::zeros_like(const ModelState<S>& s) {
  ModelGrads g;
  g.norm = NormGrads<S>::zeros_like(s.norm);
  for (const auto& l : s.tdnn) {
    g.tdnn.push_back({Matrix<S>::Zero(l.weight.rows(), l.weight.cols()),
                      Vector<S>::Zero(l.bias.size()), l.context, l.dilation});
  }
  auto za = [](const AffineLayer<S>& a) {
    return AffineLayer<S>{Matrix<S>::Zero(a.weight.rows(), a.weight.cols()),
                          Vector<S>::Zero(a.bias.size())};
  };
  g.embedding = za(s.embedding);
  g.species_head = za(s.species_head);
  g.domain_head = za(s.domain_head);
  return g;
}

template <typename S>
std::vector<ParamBlock<S>> ModelGrads<S>::blocks() {
  std::vector<ParamBlock<S>> p = norm.blocks();
  for (std::size_t i = 0; i < tdnn.size(); ++i) {
    p.push_back({"tdnn" + std::to_string(i + 1) + ".weight", span_of(tdnn[i].weight)});
    p.push_back({"tdnn" + std::to_string(i + 1) + ".bias", span_of(tdnn[i].bias)});
  }
  p.push_back({"embedding.weight", span_of(embedding.weight)});
  p.push_back({"embedding.bias", span_of(embedding.bias)});
  p.push_back({"species_head.weight", span_of(species_head.weight)});
  p.push_back({"species_head.bias", span_of(species_head.bias)});
  p.push_back({"domain_head.weight", span_of(domain_head.weight)});
  p.push_back({"domain_head.bias", span_of(domain_head.bias)});
  return p;
}

template <typename S>
Matrix<S> stats_pool(const Matrix<S>& h, int frames) {
  const Eigen::Index c = h.rows();
  const Eigen::Index batch = h.cols() / frames;
  Matrix<S> out(2 * c, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    auto seg = h.middleCols(b * frames, frames);
    const Vector<S> mean = seg.rowwise().sum() / static_cast<S>(frames);
    const Vector<S> var =
        (seg.colwise() - mean).array().square().rowwise().sum() / static_cast<S>(frames);
    out.col(b).head(c) = mean;
    out.col(b).tail(c) = (var.array() + static_cast<S>(kPoolEps)).sqrt();
  }
  return out;
}

template <typename S>
Matrix<S> stats_pool_backward(const Matrix<S>& h, const Matrix<S>& pooled,
                              const Matrix<S>& upstream, int frames) {
  const Eigen::Index c = h.rows();
  const Eigen::Index batch = h.cols() / frames;
  Matrix<S> dh(c, h.cols());
  const auto t = static_cast<S>(frames);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Vector<S> mean = pooled.col(b).head(c);
    const Vector<S> stdv = pooled.col(b).tail(c);
    const Vector<S> dmean = upstream.col(b).head(c) / t;
    const Vector<S> coef = upstream.col(b).tail(c).cwiseQuotient(stdv * t);
    dh.middleCols(b * frames, frames) =
        (coef.asDiagonal() * (h.middleCols(b * frames, frames).colwise() - mean)).colwise() +
        dmean;
  }
  return dh;
}

template <typename S>
ForwardResult<S> forward(ModelState<S>& state, const Matrix<S>& input, int frames, bool training,
                         ForwardCache<S>* cache) {
  const Topology& topo = state.topology;
  if (input.rows() != topo.n_mels || frames <= 0 || input.cols() % frames != 0 ||
      input.cols() == 0) {
    throw Error("model input shape mismatch: expected " + std::to_string(topo.n_mels) +
                " x (batch * frames), got " + std::to_string(input.rows()) + " x " +
                std::to_string(input.cols()));
  }
  ForwardCache<S> local;
  ForwardCache<S>& c = cache ? *cache : local;
  c.batch = static_cast<int>(input.cols() / frames);
  c.frames = frames;
  c.activations.clear();
  c.activations.push_back(norm_forward(state.norm, input, frames, training, &c.norm));
  for (const auto& layer : state.tdnn) {
    const Matrix<S>& x = c.activations.back();
    Matrix<S> z;
    if (layer.context == 1) {
      z.noalias() = layer.weight * x;
    } else {
      z.noalias() = layer.weight * unfold(x, frames, layer.context, layer.dilation);
    }
    z.colwise() += layer.bias;
    c.activations.push_back(z.cwiseMax(S(0)));
  }
  c.pooled = stats_pool(c.activations.back(), frames);
  c.embedding = ((state.embedding.weight * c.pooled).colwise() + state.embedding.bias).cwiseMax(S(0));
  ForwardResult<S> r;
  r.species_logits = (state.species_head.weight * c.embedding).colwise() + state.species_head.bias;
  r.domain_logits =
      (state.domain_head.weight * grl_forward(c.embedding)).colwise() + state.domain_head.bias;
  return r;
}

template <typename S>
ModelGrads<S> backward(const ModelState<S>& state, const ForwardCache<S>& c,
                       const Matrix<S>& species_grad, const Matrix<S>& domain_grad, S lambda,
                       Matrix<S>* input_grad, Matrix<S>* normalized_grad) {
  ModelGrads<S> g = ModelGrads<S>::zeros_like(state);
  g.species_head.weight.noalias() = species_grad * c.embedding.transpose();
  g.species_head.bias = species_grad.rowwise().sum();
  g.domain_head.weight.noalias() = domain_grad * c.embedding.transpose();
  g.domain_head.bias = domain_grad.rowwise().sum();

  Matrix<S> d_emb = state.species_head.weight.transpose() * species_grad +
                    grl_backward<S>(state.domain_head.weight.transpose() * domain_grad, lambda);
  d_emb = d_emb.cwiseProduct((c.embedding.array() > S(0)).matrix().template cast<S>());
  g.embedding.weight.noalias() = d_emb * c.pooled.transpose();
  g.embedding.bias = d_emb.rowwise().sum();
  const Matrix<S> d_pooled = state.embedding.weight.transpose() * d_emb;

  Matrix<S> d_act = stats_pool_backward(c.activations.back(), c.pooled, d_pooled, c.frames);
  for (std::size_t i = state.tdnn.size(); i-- > 0;) {
    const auto& layer = state.tdnn[i];
    const Matrix<S>& y = c.activations[i + 1];
    const Matrix<S>& x = c.activations[i];
    const Matrix<S> dz = d_act.cwiseProduct((y.array() > S(0)).matrix().template cast<S>());
    g.tdnn[i].bias = dz.rowwise().sum();
    if (layer.context == 1) {
      g.tdnn[i].weight.noalias() = dz * x.transpose();
    } else {
      g.tdnn[i].weight.noalias() =
          dz * unfold(x, c.frames, layer.context, layer.dilation).transpose();
    }
    const Matrix<S> dcols = layer.weight.transpose() * dz;
    d_act = fold(dcols, c.frames, layer.context, layer.dilation, x.rows());
  }
  if (normalized_grad) *normalized_grad = d_act;
  Matrix<S> dx = norm_backward(state.norm, c.norm, d_act, &g.norm);
  if (input_grad) *input_grad = std::move(dx);
  return g;
}

std::vector<unsigned char> serialize_checkpoint(const ModelState<float>& state_in) {
  ModelState<float> state = state_in;
  const Topology& t = state.topology;
  std::vector<unsigned char> b;
  b.insert(b.end(), kCheckpointMagic, kCheckpointMagic + 4);
  put_u32(b, kCheckpointVersion);
  put_u32(b, static_cast<std::uint32_t>(t.n_mels));
  put_u32(b, static_cast<std::uint32_t>(t.layers.size()));
  for (const auto& l : t.layers) {
    put_u32(b, static_cast<std::uint32_t>(l.context));
    put_u32(b, static_cast<std::uint32_t>(l.dilation));
    put_u32(b, static_cast<std::uint32_t>(l.channels));
  }
  put_u32(b, static_cast<std::uint32_t>(t.embedding_dim));
  put_u32(b, static_cast<std::uint32_t>(t.n_species));
  put_u32(b, static_cast<std::uint32_t>(t.n_regions));
  put_u32(b, static_cast<std::uint32_t>(t.norm));
  put_u32(b, static_cast<std::uint32_t>(t.group_size));
  auto blocks = state.parameters();
  for (auto& blk : state.buffers()) blocks.push_back(blk);
  put_u32(b, static_cast<std::uint32_t>(blocks.size()));
  for (const auto& blk : blocks) {
    put_u32(b, static_cast<std::uint32_t>(blk.name.size()));
    b.insert(b.end(), blk.name.begin(), blk.name.end());
    put_u32(b, static_cast<std::uint32_t>(blk.values.size()));
    for (float v : blk.values) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      put_u32(b, u);
    }
  }
  return b;
}

ModelState<float> deserialize_checkpoint(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw IoError("checkpoint: bad magic");
  }
  Reader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  Topology t;
  t.n_mels = static_cast<int>(r.u32());
  const std::uint32_t n_layers = r.u32();
  if (n_layers == 0 || n_layers > 64) throw IoError("checkpoint: bad layer count");
  t.layers.clear();
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    l.context = static_cast<int>(r.u32());
    l.dilation = static_cast<int>(r.u32());
    l.channels = static_cast<int>(r.u32());
    t.layers.push_back(l);
  }
  t.embedding_dim = static_cast<int>(r.u32());
  t.n_species = static_cast<int>(r.u32());
  t.n_regions = static_cast<int>(r.u32());
  const std::uint32_t kind = r.u32();
  if (kind > static_cast<std::uint32_t>(NormKind::kRifn)) throw IoError("checkpoint: bad norm kind");
  t.norm = static_cast<NormKind>(kind);
  t.group_size = static_cast<int>(r.u32());
  try {
    t.validate();
  } catch (const ConfigError& e) {
    throw IoError(std::string("checkpoint: ") + e.what());
  }

  ModelState<float> state = ModelState<float>::initialize(t, 0);
  auto blocks = state.parameters();
  for (auto& blk : state.buffers()) blocks.push_back(blk);
  const std::uint32_t n_blocks = r.u32();
  if (n_blocks != blocks.size()) throw IoError("checkpoint: block count mismatch");
  for (auto& blk : blocks) {
    const std::uint32_t name_len = r.u32();
    if (name_len > 256) throw IoError("checkpoint: bad block name");
    const std::string name = r.str(name_len);
    if (name != blk.name) throw IoError("checkpoint: expected block " + blk.name + ", got " + name);
    const std::uint32_t count = r.u32();
    if (count != blk.values.size()) throw IoError("checkpoint: dimension mismatch in " + name);
    for (float& v : blk.values) v = r.f32();
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return state;
}

void save_checkpoint(const ModelState<float>& state, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(state);
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
  }
  std::ofstream side(path.string() + ".topology.txt");
  if (!side) throw IoError("cannot write topology sidecar for " + path.string());
  side << state.topology.describe();
}

ModelState<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  try {
    return deserialize_checkpoint(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void check_label_space(const Topology& t, int n_species, int n_regions) {
  if (t.n_species != n_species || t.n_regions != n_regions) {
    throw Error("checkpoint heads (" + std::to_string(t.n_species) + " species, " +
                std::to_string(t.n_regions) + " regions) do not match label space (" +
                std::to_string(n_species) + " species, " + std::to_string(n_regions) +
                " regions)");
  }
}

#define DCA_INSTANTIATE_MODEL(S)                                                            \
  template struct ModelState<S>;                                                            \
  template struct ModelGrads<S>;                                                            \
  template ForwardResult<S> forward<S>(ModelState<S>&, const Matrix<S>&, int, bool,         \
                                       ForwardCache<S>*);                                   \
  template ModelGrads<S> backward<S>(const ModelState<S>&, const ForwardCache<S>&,          \
                                     const Matrix<S>&, const Matrix<S>&, S, Matrix<S>*,     \
                                     Matrix<S>*);                                         \
  template Matrix<S> stats_pool<S>(const Matrix<S>&, int);                                  \
  template Matrix<S> stats_pool_backward<S>(const Matrix<S>&, const Matrix<S>&,             \
                                            const Matrix<S>&, int);

DCA_INSTANTIATE_MODEL(float)
DCA_INSTANTIATE_MODEL(double)
#undef DCA_INSTANTIATE_MODEL

template ModelState<double> ModelState<float>::cast<double>() const;
template ModelState<float> ModelState<double>::cast<float>() const;
template ModelState<float> ModelState<float>::cast<float>() const;

}  // namespace dca
