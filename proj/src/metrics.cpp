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

#include "dca/metrics.hpp"

#include "dca/common.hpp"

#include <cmath>

namespace dca {

Metrics metrics_from_confusion(std::vector<std::vector<long>> confusion) {
  Metrics m;
  const std::size_t n = confusion.size();
  long correct = 0;
  std::vector<long> support(n, 0), predicted(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    if (confusion[i].size() != n) throw Error("confusion matrix must be square");
    for (std::size_t j = 0; j < n; ++j) {
      support[i] += confusion[i][j];
      predicted[j] += confusion[i][j];
    }
    correct += confusion[i][i];
    m.total += support[i];
  }
  if (m.total == 0) throw Error("metrics: empty test set");
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.total);
  int present = 0;
  double recall_sum = 0.0, f1_sum = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    if (support[c] == 0) continue;
    ++present;
    const double tp = static_cast<double>(confusion[c][c]);
    const double recall = tp / static_cast<double>(support[c]);
    const double precision = predicted[c] > 0 ? tp / static_cast<double>(predicted[c]) : 0.0;
    recall_sum += recall;
    f1_sum += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  m.uar = recall_sum / present;
  m.macro_f1 = f1_sum / present;
  m.confusion = std::move(confusion);
  return m;
}

Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted,
                        int n_classes) {
  if (truth.size() != predicted.size()) throw Error("metrics: label/prediction length mismatch");
  std::vector<std::vector<long>> conf(static_cast<std::size_t>(n_classes),
                                      std::vector<long>(static_cast<std::size_t>(n_classes), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= n_classes || predicted[i] < 0 || predicted[i] >= n_classes) {
      throw Error("metrics: label out of range");
    }
    ++conf[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])];
  }
  return metrics_from_confusion(std::move(conf));
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd r;
  if (values.empty()) return r;
  for (double v : values) r.mean += v;
  r.mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(values.size()));
  return r;
}

}  // namespace dca
