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

// Acceptance checks. One PASS/FAIL line per criterion; tolerances are fixed
// below. Criteria 6, 7 and 9 train real models on the synthetic corpus and
// take most of the runtime.

#include "dca/augmentation.hpp"
#include "dca/dataset.hpp"
#include "dca/explain.hpp"
#include "dca/frontend.hpp"
#include "dca/metrics.hpp"
#include "dca/model.hpp"
#include "dca/normalization.hpp"
#include "dca/synth.hpp"
#include "dca/tensor_io.hpp"
#include "dca/training.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace dca;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kGradTol = 1e-4;
constexpr double kFdStep = 1e-5;
constexpr int kGradSeeds = 20;
constexpr double kGradBudgetS = 120.0;
constexpr double kLossTol = 1e-9;
constexpr double kLambdaTol = 1e-12;
constexpr double kInRegionMin = 0.85;
constexpr double kBnDropMin = 0.15;
constexpr double kIfnGainMin = 0.05;
constexpr double kTableBudgetS = 1800.0;
constexpr double kMonotoneSlack = 0.03;
constexpr double kGrlGainMin = 0.05;
constexpr double kLadderGainMin = 0.10;
constexpr double kCamBandMass = 0.95;
constexpr double kLimeSpearmanMin = 0.9;
constexpr int kRepeats = 3;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Training profile used by every trained criterion. Adam: IFN does not
// train under plain SGD at this scale.
TrainConfig profile() {
  TrainConfig cfg;
  cfg.optimizer = Optimizer::kAdam;
  cfg.lr = 1e-3;
  cfg.lr_min = 1e-5;
  cfg.epochs = 60;
  cfg.repeats = kRepeats;
  cfg.topology.layers = {{5, 1, 128}, {3, 2, 128}, {3, 3, 128}, {1, 1, 128}, {1, 1, 256}};
  cfg.seed = 0;
  return cfg;
}

// ---- helpers -------------------------------------------------------------

MatrixD random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  MatrixD m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  }
  return m;
}

double relative_error(std::span<const double> a, std::span<const double> n) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

std::vector<double> numeric_gradient(std::span<double> values, const std::function<double()>& f) {
  std::vector<double> g(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + kFdStep;
    const double up = f();
    values[i] = saved - kFdStep;
    const double down = f();
    values[i] = saved;
    g[i] = (up - down) / (2.0 * kFdStep);
  }
  return g;
}

std::span<double> span_of(MatrixD& m) { return {m.data(), static_cast<std::size_t>(m.size())}; }
std::span<const double> span_of(const MatrixD& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

const NormKind kAllKinds[] = {NormKind::kBatchNorm, NormKind::kGroupWhitening,
                              NormKind::kTimeNorm, NormKind::kIfn, NormKind::kRifn};

// ---- 1: gradients ----------------------------------------------------------

struct GradTally {
  double worst = 0.0;
  std::string worst_name;
  int checks = 0;
  void add(double err, const std::string& name) {
    ++checks;
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
  }
};

void check_normalizers(GradTally& tally) {
  const int bins = 8, frames = 10, batch = 4;
  for (NormKind kind : kAllKinds) {
    for (bool training : {true, false}) {
      for (std::uint64_t seed = 0; seed < kGradSeeds; ++seed) {
        Rng rng(9000 + seed);
        auto state = NormState<double>::create(kind, bins, 4);
        for (int i = 0; i < bins; ++i) {
          state.gamma[i] = rng.uniform(0.5, 1.5);
          state.beta[i] = rng.uniform(-0.5, 0.5);
          state.running_mean[i] = rng.uniform(-0.5, 0.5);
          state.running_var[i] = rng.uniform(0.5, 2.0);
        }
        for (Eigen::Index i = 0; i < state.gate_logits.size(); ++i) {
          state.gate_logits[i] = rng.uniform(-1.0, 1.0);
        }
        for (auto& c : state.running_cov) {
          MatrixD r = random_matrix(rng, c.rows(), c.cols(), 0.3);
          c = MatrixD::Identity(c.rows(), c.cols()) + r * r.transpose();
        }
        MatrixD x = random_matrix(rng, bins, batch * frames);
        MatrixD up = random_matrix(rng, bins, batch * frames);
        auto f = [&]() {
          NormState<double> s = state;
          return (norm_forward(s, x, frames, training).array() * up.array()).sum();
        };
        NormState<double> s = state;
        NormCache<double> cache;
        norm_forward(s, x, frames, training, &cache);
        NormGrads<double> g = NormGrads<double>::zeros_like(state);
        MatrixD dx = norm_backward(state, cache, up, &g);
        const std::string tag = norm_kind_name(kind) + (training ? "/train" : "/eval");
        tally.add(relative_error(span_of(dx), numeric_gradient(span_of(x), f)), tag + " input");
        auto params = state.parameters();
        auto grads = g.blocks();
        for (std::size_t p = 0; p < params.size(); ++p) {
          std::vector<double> ana(grads[p].values.begin(), grads[p].values.end());
          tally.add(relative_error(ana, numeric_gradient(params[p].values, f)),
                    tag + " " + params[p].name);
        }
      }
    }
  }
}

std::vector<bool> relu_pattern(const ForwardCache<double>& c) {
  std::vector<bool> p;
  for (std::size_t i = 1; i < c.activations.size(); ++i) {
    for (Eigen::Index k = 0; k < c.activations[i].size(); ++k) {
      p.push_back(c.activations[i].data()[k] > 0.0);
    }
  }
  for (Eigen::Index k = 0; k < c.embedding.size(); ++k) p.push_back(c.embedding.data()[k] > 0.0);
  return p;
}

// TDNN layers, stats pooling, heads and the reversal, through the full model.
bool check_model(GradTally& tally) {
  bool enough = true;
  for (NormKind kind : kAllKinds) {
    Topology t;
    t.n_mels = 6;
    t.layers = {{3, 1, 8}, {3, 2, 8}, {1, 1, 6}};
    t.embedding_dim = 5;
    t.norm = kind;
    t.group_size = 3;
    int checked = 0;
    for (std::uint64_t seed = 0; checked < kGradSeeds && seed < 4 * kGradSeeds; ++seed) {
      Rng rng(7000 + seed);
      auto m = ModelState<double>::initialize(t, seed);
      for (auto& l : m.tdnn) {
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias[i] = rng.uniform(-0.2, 0.2);
      }
      for (auto* a : {&m.embedding, &m.species_head, &m.domain_head}) {
        for (Eigen::Index i = 0; i < a->bias.size(); ++i) a->bias[i] = rng.uniform(0.05, 0.3);
      }
      const int frames = 12, batch = 3;
      MatrixD x = random_matrix(rng, t.n_mels, batch * frames);
      MatrixD ds = random_matrix(rng, t.n_species, batch);
      MatrixD dd = random_matrix(rng, t.n_regions, batch);
      const double lambda = rng.uniform(0.1, 1.0);
      ForwardCache<double> cache;
      ModelState<double> fwd = m;
      forward(fwd, x, frames, true, &cache);
      const auto pattern = relu_pattern(cache);
      bool crossed = false;
      auto f = [&]() {
        ModelState<double> s = m;
        ForwardCache<double> c;
        ForwardResult<double> r = forward(s, x, frames, true, &c);
        if (relu_pattern(c) != pattern) crossed = true;
        return (r.species_logits.array() * ds.array()).sum() +
               (r.domain_logits.array() * dd.array()).sum();
      };
      // lambda = -1 turns the reversal into a pass-through, the plain
      // gradient of f.
      MatrixD dx;
      ModelGrads<double> g = backward(m, cache, ds, dd, -1.0, &dx);
      std::vector<std::pair<double, std::string>> errs;
      errs.emplace_back(relative_error(span_of(dx), numeric_gradient(span_of(x), f)), "input");
      auto params = m.parameters();
      auto grads = g.blocks();
      for (std::size_t p = 0; p < params.size(); ++p) {
        std::vector<double> ana(grads[p].values.begin(), grads[p].values.end());
        errs.emplace_back(relative_error(ana, numeric_gradient(params[p].values, f)),
                          params[p].name);
      }
      if (crossed) continue;
      ++checked;
      for (auto& [e, n] : errs) tally.add(e, "model/" + norm_kind_name(kind) + " " + n);

      // Reversal: extractor gets species - lambda * domain, the domain head
      // its own gradient unchanged.
      ModelGrads<double> sp = backward(m, cache, ds, MatrixD(MatrixD::Zero(t.n_regions, batch)), 0.0);
      ModelGrads<double> dom = backward(m, cache, MatrixD(MatrixD::Zero(t.n_species, batch)), dd, -1.0);
      ModelGrads<double> rev = backward(m, cache, ds, dd, lambda);
      double e = relative_error(span_of(rev.domain_head.weight), span_of(dom.domain_head.weight));
      for (std::size_t i = 0; i < m.tdnn.size(); ++i) {
        MatrixD expect = sp.tdnn[i].weight - lambda * dom.tdnn[i].weight;
        e = std::max(e, relative_error(span_of(rev.tdnn[i].weight), span_of(expect)));
      }
      tally.add(e, "grl/" + norm_kind_name(kind));
    }
    if (checked < kGradSeeds) enough = false;
  }
  return enough;
}

void check_stats_pool(GradTally& tally) {
  for (std::uint64_t seed = 0; seed < kGradSeeds; ++seed) {
    Rng rng(6000 + seed);
    const int frames = 7, batch = 3;
    MatrixD h = random_matrix(rng, 5, batch * frames);
    MatrixD up = random_matrix(rng, 10, batch);
    auto f = [&]() { return (stats_pool(h, frames).array() * up.array()).sum(); };
    MatrixD pooled = stats_pool(h, frames);
    MatrixD dh = stats_pool_backward(h, pooled, up, frames);
    tally.add(relative_error(span_of(dh), numeric_gradient(span_of(h), f)), "stats_pool");
  }
}

void check_loss(GradTally& tally) {
  for (std::uint64_t seed = 0; seed < kGradSeeds; ++seed) {
    Rng rng(5000 + seed);
    const int n = 4;
    std::vector<LossTarget> t(n);
    for (auto& x : t) {
      // Soft species targets, as Mixup produces.
      x.species_dist.resize(kNumSpecies);
      double z = 0.0;
      for (double& p : x.species_dist) z += (p = rng.uniform(0.0, 1.0));
      for (double& p : x.species_dist) p /= z;
      x.region = rng.uniform_int(kNumRegions);
      x.weight = rng.bernoulli(0.5) ? kSyntheticWeight : 1.0;
    }
    MatrixD s = random_matrix(rng, kNumSpecies, n, 2.0);
    MatrixD d = random_matrix(rng, kNumRegions, n, 2.0);
    const double alpha = 0.5;
    auto r = weighted_loss<double>(t, s, d, alpha);
    auto f = [&]() { return weighted_loss<double>(t, s, d, alpha).total; };
    tally.add(relative_error(span_of(r.species_grad), numeric_gradient(span_of(s), f)),
              "loss species");
    tally.add(relative_error(span_of(r.domain_grad), numeric_gradient(span_of(d), f)),
              "loss domain");
  }
}

Outcome criterion1() {
  auto t0 = Clock::now();
  GradTally tally;
  check_normalizers(tally);
  bool enough = check_model(tally);
  check_stats_pool(tally);
  check_loss(tally);
  const double s = seconds_since(t0);
  Outcome o;
  o.pass = enough && tally.worst <= kGradTol && s < kGradBudgetS;
  o.detail = std::to_string(tally.checks) + " blocks, worst rel err " + fmt("%.2e", tally.worst) +
             " (" + tally.worst_name + "), " + fmt("%.1f", s) + " s" +
             (enough ? "" : ", too few smooth model instances");
  return o;
}

// ---- 2: front-end shape -------------------------------------------------

Outcome criterion2() {
  auto sine = [](int rate, double seconds) {
    Waveform w;
    w.sample_rate = rate;
    w.samples.resize(static_cast<std::size_t>(std::lround(rate * seconds)));
    for (std::size_t i = 0; i < w.samples.size(); ++i) {
      w.samples[i] = static_cast<float>(0.4 * std::sin(2.0 * M_PI * 1500.0 * i / rate));
    }
    return w;
  };
  Waveform exact = sine(kSampleRate, 8.0);
  MelSpectrogram a = log_mel(exact);
  MelSpectrogram b = extract_features(exact);
  MelSpectrogram c = extract_features(sine(44100, 3.0));
  MelSpectrogram d = extract_features(sine(22050, 11.0));
  std::ostringstream os;
  bool ok = exact.samples.size() == 128000;
  for (const auto* m : {&a, &b, &c, &d}) {
    os << m->n_mels() << "x" << m->n_frames() << " ";
    ok = ok && m->n_mels() == 128 && m->n_frames() == 251 && m->values.allFinite();
  }
  return {ok, "log_mel, features at 16k/8s, 44.1k/3s, 22.05k/11s: " + os.str()};
}

// ---- 3: loss arithmetic ------------------------------------------------

MatrixD logits_with_ce(int classes, double ce) {
  const double p = std::exp(-ce);
  MatrixD z = MatrixD::Zero(classes, 1);
  z(0, 0) = std::log(p * (classes - 1) / (1.0 - p));
  return z;
}

LossTarget hard(int species, int region, double weight) {
  LossTarget t;
  t.species_dist.assign(kNumSpecies, 0.0);
  t.species_dist[static_cast<std::size_t>(species)] = 1.0;
  t.region = region;
  t.weight = weight;
  return t;
}

Outcome criterion3() {
  TrainConfig defaults;
  std::vector<LossTarget> real{hard(0, 0, 1.0)};
  double l1 = weighted_loss<double>(real, logits_with_ce(kNumSpecies, 1.0),
                               logits_with_ce(kNumRegions, 0.4), defaults.alpha_domain)
                  .total;
  std::vector<LossTarget> syn{hard(0, 0, defaults.w_syn)};
  MatrixD sure = MatrixD::Zero(kNumRegions, 1);
  sure(0, 0) = 1000.0;
  double l2 = weighted_loss<double>(syn, logits_with_ce(kNumSpecies, 1.0), sure, defaults.alpha_domain)
                  .total;
  std::vector<LossTarget> two{hard(3, 1, 1.0), hard(8, 2, 1.0)};
  auto u = weighted_loss<double>(two, MatrixD::Zero(kNumSpecies, 2), MatrixD::Zero(kNumRegions, 2), 0.0);
  const double ln10 = std::log(10.0);
  bool ok = defaults.w_syn == 0.3 && defaults.alpha_domain == 0.5 && std::abs(l1 - 1.2) <= kLossTol &&
            std::abs(l2 - 0.3) <= kLossTol && std::abs(u.species_ce[0] - ln10) <= kLossTol &&
            std::abs(u.species_ce[1] - ln10) <= kLossTol && std::abs(u.total - ln10) <= kLossTol;
  return {ok, "L=" + fmt("%.12f", l1) + ", " + fmt("%.12f", l2) + ", uniform CE " +
                  fmt("%.12f", u.species_ce[0])};
}

// ---- 4: GRL schedule ---------------------------------------------------

Outcome criterion4() {
  GrlSchedule s;
  const double l0 = s.lambda(0), l5 = s.lambda(5), l10 = s.lambda(10), l40 = s.lambda(40);
  bool ok = std::abs(l0 - 0.1) <= kLambdaTol && std::abs(l5 - 0.55) <= kLambdaTol &&
            std::abs(l10 - 1.0) <= kLambdaTol && std::abs(l40 - 1.0) <= kLambdaTol;
  return {ok, "lambda(0,5,10,40) = " + fmt("%.3f", l0) + ", " + fmt("%.3f", l5) + ", " +
                  fmt("%.3f", l10) + ", " + fmt("%.3f", l40)};
}

// ---- 5: metrics --------------------------------------------------------

Metrics brute_force(const std::vector<int>& truth, const std::vector<int>& pred, int n) {
  Metrics m;
  long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  double recall_sum = 0.0, f1_sum = 0.0;
  int present = 0;
  for (int c = 0; c < n; ++c) {
    long tp = 0, fn = 0, fp = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c && pred[i] == c) ++tp;
      if (truth[i] == c && pred[i] != c) ++fn;
      if (truth[i] != c && pred[i] == c) ++fp;
    }
    if (tp + fn == 0) continue;
    ++present;
    const double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double prec = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    recall_sum += rec;
    f1_sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
  }
  m.uar = recall_sum / present;
  m.macro_f1 = f1_sum / present;
  return m;
}

Outcome criterion5() {
  Rng rng(2026);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int len = 10 + rng.uniform_int(200);
    std::vector<int> truth(static_cast<std::size_t>(len)), pred(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
      truth[i] = rng.uniform_int(kNumSpecies);
      pred[i] = rng.bernoulli(0.6) ? truth[i] : rng.uniform_int(kNumSpecies);
    }
    Metrics m = compute_metrics(truth, pred, kNumSpecies);
    Metrics o = brute_force(truth, pred, kNumSpecies);
    if (m.accuracy != o.accuracy || m.uar != o.uar || m.macro_f1 != o.macro_f1) ++mismatches;
  }
  return {mismatches == 0, std::to_string(mismatches) + " of 100 vectors differ"};
}

// ---- shared corpus and models for 6, 7, 9 ------------------------------

struct Corpus {
  Dataset data;
  double build_s = 0.0;
};

Corpus build_corpus(const fs::path& work) {
  auto t0 = Clock::now();
  SynthConfig sc;  // 10 x 3 x 20, species {1,3,6,8} scarce in region 1
  const fs::path dir = work / "corpus";
  fs::remove_all(dir);
  Manifest m = generate_corpus(sc, dir);
  DatasetOptions opt;
  opt.cache_dir = work / "features";
  opt.keep_waveforms = true;
  Corpus c;
  c.data = Dataset::load(m, opt);
  c.build_s = seconds_since(t0);
  return c;
}

struct CellStats {
  double in_region = 0.0;  // mean over the diagonal cells
  double cross = 0.0;      // mean over the off-diagonal cells
  double min_in = 1.0;
  std::string diagonal;
};

CellStats table_stats(const Report& r) {
  CellStats s;
  int nd = 0, no = 0;
  std::ostringstream os;
  for (const CellSummary& c : r.summarize()) {
    if (c.train_region == c.test_region) {
      s.in_region += c.accuracy.mean;
      s.min_in = std::min(s.min_in, c.accuracy.mean);
      os << (nd ? "/" : "") << fmt("%.3f", c.accuracy.mean);
      ++nd;
    } else {
      s.cross += c.accuracy.mean;
      ++no;
    }
  }
  s.in_region /= std::max(nd, 1);
  s.cross /= std::max(no, 1);
  s.diagonal = os.str();
  return s;
}

using ModelKey = std::pair<int, std::uint64_t>;  // train region, seed

// ---- 6: Table I analog -------------------------------------------------

Outcome criterion6(const Corpus& corpus, double corpus_s, const fs::path& work,
                   std::map<ModelKey, ModelState<float>>* bn_models) {
  auto t0 = Clock::now();
  auto progress = [](const std::string& m) { std::cout << "  .. " << m << std::endl; };
  TrainConfig bn = profile();
  bn.norm_kind = NormKind::kBatchNorm;
  Report rb = run_matrix(
      corpus.data, bn, "bn",
      [&](int region, std::uint64_t seed, const ModelState<float>& m) {
        if (bn_models) bn_models->emplace(ModelKey{region, seed}, m);
      },
      progress);
  TrainConfig ifn = profile();
  ifn.norm_kind = NormKind::kIfn;
  Report ri = run_matrix(corpus.data, ifn, "ifn", {}, progress);
  const double s = corpus_s + seconds_since(t0);
  rb.write(work / "table_bn.csv");
  ri.write(work / "table_ifn.csv");
  std::cout << rb.table() << ri.table();

  CellStats b = table_stats(rb), i = table_stats(ri);
  const bool a_ok = b.min_in >= kInRegionMin && i.min_in >= kInRegionMin;
  const bool b_ok = b.in_region - b.cross >= kBnDropMin;
  const bool c_ok = i.cross - b.cross >= kIfnGainMin;
  const bool t_ok = s <= kTableBudgetS;
  std::cout << "  6a in-region >= " << kInRegionMin << ": bn " << b.diagonal << ", ifn "
            << i.diagonal << (a_ok ? " ok" : " NOT MET") << "\n"
            << "  6b bn in " << fmt("%.3f", b.in_region) << " cross " << fmt("%.3f", b.cross)
            << " drop " << fmt("%.3f", b.in_region - b.cross) << (b_ok ? " ok" : " NOT MET") << "\n"
            << "  6c ifn cross " << fmt("%.3f", i.cross) << " - bn cross " << fmt("%.3f", b.cross)
            << " = " << fmt("%.3f", i.cross - b.cross) << (c_ok ? " ok" : " NOT MET") << "\n"
            << "  runtime " << fmt("%.0f", s) << " s" << (t_ok ? " ok" : " NOT MET") << "\n";
  std::string failed;
  if (!a_ok) failed += " a";
  if (!b_ok) failed += " b";
  if (!c_ok) failed += " c";
  if (!t_ok) failed += " runtime";
  return {a_ok && b_ok && c_ok && t_ok,
          "bn in/cross " + fmt("%.3f", b.in_region) + "/" + fmt("%.3f", b.cross) +
              ", ifn in/cross " + fmt("%.3f", i.in_region) + "/" + fmt("%.3f", i.cross) + ", " +
              fmt("%.0f", s) + " s" + (failed.empty() ? "" : ", unmet:" + failed)};
}

// ---- 7: ablation ladder ------------------------------------------------

Outcome criterion7(const Corpus& corpus, const fs::path& work) {
  auto progress = [](const std::string& m) { std::cout << "  .. " << m << std::endl; };
  TrainConfig cfg = profile();
  cfg.norm_kind = NormKind::kIfn;
  const int region = lowest_resource_region(corpus.data);
  auto t0 = Clock::now();
  Report r = run_ablation(corpus.data, cfg, region, progress);
  r.write(work / "ablation.csv");
  std::cout << r.table();

  // Cross-region mean per stage, in ladder order.
  std::vector<std::string> names;
  std::map<std::string, std::pair<double, int>> acc;
  for (const ReportRecord& rec : r.records) {
    if (rec.test_region == rec.train_region) continue;
    if (!acc.count(rec.variant)) names.push_back(rec.variant);
    acc[rec.variant].first += rec.metrics.accuracy;
    acc[rec.variant].second += 1;
  }
  std::vector<double> cross;
  std::ostringstream os;
  for (const auto& n : names) {
    cross.push_back(acc[n].first / acc[n].second);
    os << n << " " << fmt("%.3f", cross.back()) << "  ";
  }
  bool mono = cross.size() == 5;
  for (std::size_t k = 1; k < cross.size(); ++k) mono = mono && cross[k] >= cross[k - 1] - kMonotoneSlack;
  const double grl_gain = cross.size() == 5 ? cross[2] - cross[1] : 0.0;
  const double full_gain = cross.size() == 5 ? cross[4] - cross[0] : 0.0;
  const bool g_ok = grl_gain >= kGrlGainMin, f_ok = full_gain >= kLadderGainMin;
  std::cout << "  region " << region << " cross-region means: " << os.str() << "\n"
            << "  monotone within " << kMonotoneSlack << (mono ? " ok" : " NOT MET")
            << "; +grl - +aug " << fmt("%.3f", grl_gain) << (g_ok ? " ok" : " NOT MET")
            << "; full - baseline " << fmt("%.3f", full_gain) << (f_ok ? " ok" : " NOT MET")
            << "; " << fmt("%.0f", seconds_since(t0)) << " s\n";
  return {mono && g_ok && f_ok, os.str() + "grl gain " + fmt("%.3f", grl_gain) + ", full gain " +
                                    fmt("%.3f", full_gain)};
}

// ---- 8: synthetic sample weighting -------------------------------------

Outcome criterion8() {
  // One scarce-target region and a source region, real features.
  Dataset d;
  Rng rng(88);
  for (int r = 0; r < 2; ++r) {
    for (int s = 0; s < 3; ++s) {
      for (int k = 0; k < 3; ++k) {
        Clip c;
        c.entry.path = "r" + std::to_string(r) + "s" + std::to_string(s) + "k" + std::to_string(k);
        c.entry.species = s;
        c.entry.region = r;
        c.split = Split::kTrain;
        c.features.values = random_matrix(rng, kNumMels, 20).cast<float>();
        c.features.values.array() += static_cast<float>(r);
        d.clips.push_back(std::move(c));
      }
    }
  }
  std::vector<int> species{0, 2};
  Dataset x = with_dialect_transfer(d, 0, 1, species, kSyntheticWeight);
  std::vector<LossTarget> t;
  std::vector<bool> syn;
  for (const Clip& c : x.clips) {
    Sample s;
    s.species = c.entry.species;
    s.region = c.entry.region;
    s.synthetic = c.entry.synthetic;
    s.weight = c.entry.weight;
    LossTarget lt;
    lt.species_dist = s.label_distribution(kNumSpecies);
    lt.region = s.region;
    lt.weight = s.weight;
    t.push_back(lt);
    syn.push_back(s.synthetic);
  }
  const int n = static_cast<int>(t.size());
  MatrixD sl = random_matrix(rng, kNumSpecies, n, 1.5);
  MatrixD dl = random_matrix(rng, kNumRegions, n, 1.5);
  auto r = weighted_loss<double>(t, sl, dl, 0.5);
  std::vector<LossTarget> unweighted = t;
  for (auto& u : unweighted) u.weight = 1.0;
  auto ru = weighted_loss<double>(unweighted, sl, dl, 0.5);

  // Per-sample contribution of i: change in species_term * N when sample i
  // alone is zero-weighted.
  int n_syn = 0, bad = 0;
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    std::vector<LossTarget> drop = t;
    drop[static_cast<std::size_t>(i)].weight = 0.0;
    const double contrib = n * (r.species_term - weighted_loss<double>(drop, sl, dl, 0.5).species_term);
    const double ce = ru.species_ce[static_cast<std::size_t>(i)];
    const double expected = (syn[static_cast<std::size_t>(i)] ? 0.3 : 1.0) * ce;
    const double err = std::abs(contrib - expected) / std::max(1.0, ce);
    worst = std::max(worst, err);
    // Gradient column scales by the weight too.
    const double gerr = (r.species_grad.col(i) - (syn[static_cast<std::size_t>(i)] ? 0.3 : 1.0) *
                                                     ru.species_grad.col(i))
                            .cwiseAbs()
                            .maxCoeff();
    worst = std::max(worst, gerr);
    if (err > 1e-12 || gerr > 1e-15) ++bad;
    n_syn += syn[static_cast<std::size_t>(i)];
  }
  const bool counts = n_syn == 6 && n == 24;
  return {counts && bad == 0, std::to_string(n_syn) + " transferred of " + std::to_string(n) +
                                  " samples, worst deviation " + fmt("%.1e", worst)};
}

// ---- 9: explainability -------------------------------------------------

MatrixD band_probe(std::uint64_t seed) {
  Rng rng(seed);
  MatrixD w = MatrixD::Zero(kNumMels, kNumFrames);
  for (Eigen::Index t = 0; t < kNumFrames; ++t) {
    for (Eigen::Index f = 40; f <= 44; ++f) w(f, t) = rng.uniform(0.5, 1.0);
  }
  return w;
}

MelSpectrogram positive_input(std::uint64_t seed) {
  Rng rng(seed);
  MelSpectrogram x;
  x.values.resize(kNumMels, kNumFrames);
  for (Eigen::Index t = 0; t < kNumFrames; ++t) {
    for (Eigen::Index f = 0; f < kNumMels; ++f) {
      x.values(f, t) = static_cast<float>(rng.uniform(0.5, 1.5));
    }
  }
  return x;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
    return r;
  };
  auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

// Mean Grad-CAM of each species over a model's correctly classified test
// clips of its own training region.
std::map<int, SaliencyMap> species_maps(const ModelState<float>& model, const Dataset& data,
                                        int region) {
  ModelScorer scorer(model);
  std::map<int, std::pair<MatrixD, int>> sums;
  for (int i : data.select(region, Split::kTest, false)) {
    const Clip& c = data.clips[i];
    if (scorer.predict(c.features.values) != c.entry.species) continue;
    SaliencyMap m = grad_cam(scorer, c.features, c.entry.species);
    auto& [sum, n] = sums[c.entry.species];
    if (n == 0) sum = MatrixD::Zero(m.values.rows(), m.values.cols());
    sum += m.values;
    ++n;
  }
  std::map<int, SaliencyMap> out;
  for (auto& [s, p] : sums) {
    SaliencyMap m;
    m.values = p.first / p.second;
    m.method = "gradcam";
    m.target_class = s;
    out.emplace(s, std::move(m));
  }
  return out;
}

Outcome criterion9(const Corpus& corpus, const std::map<ModelKey, ModelState<float>>& models) {
  // Probes.
  LinearScorer probe(band_probe(1));
  MelSpectrogram x = positive_input(2);
  SaliencyMap cam = grad_cam(probe, x, 0);
  const double band = cam.values.middleRows(40, 5).sum() / cam.values.sum();

  Rng rng(8);
  MatrixD w = random_matrix(rng, kNumMels, kNumFrames);
  LinearScorer linear(w);
  MelSpectrogram xl = positive_input(9);
  LimeConfig lc;
  lc.baseline.assign(kNumMels, 0.0);
  lc.rng_seed = 3;
  LimeResult lr = lime(linear, xl, 0, lc);
  TileGrid g = TileGrid::make(kNumMels, kNumFrames, lc.tiles_f, lc.tiles_t);
  std::vector<double> truth, got;
  for (int i = 0; i < g.n_f; ++i) {
    for (int j = 0; j < g.n_t; ++j) {
      const int r0 = g.row_begin(i), c0 = g.col_begin(j);
      const int rows = std::min(g.tile_f, kNumMels - r0), cols = std::min(g.tile_t, kNumFrames - c0);
      const MatrixD xb = xl.values.block(r0, c0, rows, cols).cast<double>();
      truth.push_back((w.block(r0, c0, rows, cols).array() * xb.array()).sum());
      got.push_back(lr.weights(i, j));
    }
  }
  const double rho = spearman(truth, got);
  const bool det = grad_cam(probe, x, 0).values == cam.values &&
                   lime(linear, xl, 0, lc).weights == lr.weights;

  // Trained models: same region, two seeds vs. different regions.
  double same = 0.0, cross = 0.0;
  int n_same = 0, n_cross = 0;
  std::map<ModelKey, std::map<int, SaliencyMap>> maps;
  for (const auto& [key, m] : models) {
    if (key.second > 1) continue;
    maps.emplace(key, species_maps(m, corpus.data, key.first));
  }
  for (const auto& [ka, ma] : maps) {
    for (const auto& [kb, mb] : maps) {
      if (!(ka < kb)) continue;
      const bool same_region = ka.first == kb.first;
      // Cross-region pairs share the seed so only the region differs.
      if (!same_region && ka.second != kb.second) continue;
      for (const auto& [s, sa] : ma) {
        auto it = mb.find(s);
        if (it == mb.end()) continue;
        const double o = saliency_overlap(sa, it->second);
        if (same_region) {
          same += o;
          ++n_same;
        } else {
          cross += o;
          ++n_cross;
        }
      }
    }
  }
  same /= std::max(n_same, 1);
  cross /= std::max(n_cross, 1);
  const bool trained_ok = n_same > 0 && n_cross > 0 && same >= cross;
  std::cout << "  band mass " << fmt("%.4f", band) << ", lime spearman " << fmt("%.3f", rho)
            << ", deterministic " << (det ? "yes" : "no") << ", overlap same-region "
            << fmt("%.3f", same) << " (" << n_same << ") vs cross-region " << fmt("%.3f", cross)
            << " (" << n_cross << ")\n";
  return {band >= kCamBandMass && rho >= kLimeSpearmanMin && det && trained_ok,
          "band " + fmt("%.3f", band) + ", spearman " + fmt("%.3f", rho) + ", overlap " +
              fmt("%.3f", same) + " vs " + fmt("%.3f", cross)};
}

// ---- 10: determinism ---------------------------------------------------

std::vector<std::string> tree_hashes(const fs::path& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    out.push_back(fs::relative(e.path(), dir).string() + " " + file_hash(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Outcome criterion10(const fs::path& work) {
  SynthConfig sc;
  sc.clips_per_cell = 4;
  sc.seed = 11;
  const fs::path a = work / "det_a", b = work / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  Manifest ma = generate_corpus(sc, a);
  Manifest mb = generate_corpus(sc, b);
  auto ha = tree_hashes(a), hb = tree_hashes(b);
  const bool synth_ok = !ha.empty() && ha == hb;

  // Every toggle on so each random stream enters the checkpoint.
  TrainConfig cfg;
  cfg.topology.layers = {{3, 1, 16}, {1, 1, 16}};
  cfg.topology.embedding_dim = 8;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.domain_batch = 4;
  cfg.toggles = {true, true, true, true};
  cfg.seed = 5;
  DatasetOptions opt;
  Dataset da = Dataset::load(ma, opt);
  Dataset db = Dataset::load(mb, opt);
  auto ca = serialize_checkpoint(train(da, 1, cfg).model);
  auto cb = serialize_checkpoint(train(db, 1, cfg).model);
  cfg.seed = 6;
  auto cc = serialize_checkpoint(train(da, 1, cfg).model);
  const bool train_ok = ca == cb && ca != cc;
  return {synth_ok && train_ok, std::to_string(ha.size()) + " corpus files " +
                                    (synth_ok ? "identical" : "DIFFER") + ", checkpoints " +
                                    (ca == cb ? "identical" : "DIFFER") +
                                    (ca != cc ? ", seed-sensitive" : ", seed-INSENSITIVE")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  fs::path work = fs::temp_directory_path() / "dca_acceptance";
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  auto wanted = [&](int k) { return only.empty() || std::count(only.begin(), only.end(), k); };

  int failures = 0;
  auto report = [&](int k, const Outcome& o) {
    std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail << ")"
              << std::endl;
    failures += !o.pass;
  };
  auto guarded = [&](int k, const std::function<Outcome()>& f) {
    if (!wanted(k)) return;
    try {
      report(k, f());
    } catch (const std::exception& e) {
      report(k, {false, std::string("exception: ") + e.what()});
    }
  };

  guarded(1, criterion1);
  guarded(2, criterion2);
  guarded(3, criterion3);
  guarded(4, criterion4);
  guarded(5, criterion5);

  std::optional<Corpus> corpus;
  std::map<ModelKey, ModelState<float>> bn_models;
  if (wanted(6) || wanted(7) || wanted(9)) {
    try {
      corpus = build_corpus(work);
      std::cout << "  corpus: " << corpus->data.clips.size() << " clips, "
                << fmt("%.0f", corpus->build_s) << " s" << std::endl;
    } catch (const std::exception& e) {
      std::cout << "  corpus: " << e.what() << std::endl;
    }
  }
  auto need_corpus = [&]() {
    if (!corpus) throw Error("synthetic corpus unavailable");
    return std::cref(*corpus);
  };
  // 9 reuses the BatchNorm models of 6; without 6 they are trained here.
  guarded(6, [&] { return criterion6(need_corpus(), corpus->build_s, work, &bn_models); });
  guarded(7, [&] { return criterion7(need_corpus(), work); });
  guarded(8, criterion8);
  guarded(9, [&] {
    if (bn_models.empty()) {
      TrainConfig bn = profile();
      bn.norm_kind = NormKind::kBatchNorm;
      bn.repeats = 2;
      for (int r : need_corpus().get().data.regions()) {
        for (std::uint64_t s = 0; s < 2; ++s) {
          bn.seed = s;
          bn_models.emplace(ModelKey{r, s}, train(corpus->data, r, bn).model);
        }
      }
    }
    return criterion9(need_corpus(), bn_models);
  });
  guarded(10, [&] { return criterion10(work); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
