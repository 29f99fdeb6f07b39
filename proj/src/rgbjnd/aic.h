// Copyright (c) the RGB-JND Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Automatic IQA combination: each distortion group selects a fixed triple
// of quality metrics, and the perceptual loss is their weighted distance
// sum. Group selection itself is a hard switch; gradients flow through
// the metrics only, never through the selector.

#include <array>
#include <string>
#include <vector>

#include "rgbjnd/tensor.h"

namespace rgbjnd {
namespace aic {

// A metric triple serving one distortion group. Metric names are the
// canonical registry names; weights are positive and default to 1/3.
struct IqaCombo {
  int group = 0;
  std::array<std::string, 3> metrics;
  std::array<double, 3> weights = {1.0 / 3, 1.0 / 3, 1.0 / 3};
};

// Validates and canonicalizes: group must be in 1..5 (ParameterError),
// metric names must not repeat after alias resolution and weights must be
// positive and finite (ConfigError). Names that are neither built-ins nor
// aliases are kept verbatim; they fail later, at evaluation.
IqaCombo MakeCombo(int group, const std::array<std::string, 3>& metrics,
                   const std::array<double, 3>& weights);

// The published group-to-triple assignment. Groups 1 and 4 share a
// triple; all weights are 1/3.
IqaCombo ComboFor(int group);

// Weighted sum of the combo's normalized metric distances between a
// reference image o and a test image d, both (3, h, w). When grad is
// non-null it receives the derivative with respect to d. Every metric in
// the combo must be differentiable: a plugin metric raises ConfigError,
// an unknown name RegistryError.
double PerceptualLoss(const IqaCombo& combo, const Tensor& o, const Tensor& d,
                      Tensor* grad = nullptr);

// The five-row assignment table, row-overridable for ablation studies.
class ComboTable {
 public:
  ComboTable();  // published defaults

  const IqaCombo& Get(int group) const;  // ParameterError outside 1..5
  void Set(int group, const std::array<std::string, 3>& metrics,
           const std::array<double, 3>& weights);

 private:
  std::array<IqaCombo, 5> rows_;
};

// Reads row overrides from a text file, one per line:
//
//   group = metric, metric, metric [: weight, weight, weight]
//
// '#' starts a comment; blank lines are skipped; omitted weights default
// to 1/3 each; unlisted groups keep the published rows. Any parse or
// validation failure raises ConfigError with the offending line number.
ComboTable LoadComboTable(const std::string& path);

// Majority group over per-image classifications, ties resolved toward
// the smallest group index. Empty input or a value outside 1..5 raises
// ParameterError.
int MajorityGroup(const std::vector<int>& groups);

}  // namespace aic
}  // namespace rgbjnd
