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

#include <span>
#include <string>
#include <vector>

namespace dca {

struct Metrics {
  double accuracy = 0.0;
  // Mean per-class recall over classes present in the truth labels.
  double uar = 0.0;
  // Mean per-class F1 over classes present in the truth labels.
  double macro_f1 = 0.0;
  // confusion[true][predicted]
  std::vector<std::vector<long>> confusion;
  long total = 0;
};

Metrics metrics_from_confusion(std::vector<std::vector<long>> confusion);
Metrics compute_metrics(std::span<const int> truth, std::span<const int> predicted, int n_classes);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population std over repeats
};

MeanStd mean_std(std::span<const double> values);

}  // namespace dca
