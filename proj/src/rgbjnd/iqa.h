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

// Five full-reference quality metrics behind one normalized-distance
// interface, each with an analytic gradient with respect to the test
// image, plus a registry for evaluation-only plugin metrics.
//
// Normalization contract: similarity scores map to distance =
// 1 - similarity; deviation scores are clipped into [0, 1]. Every
// distance is exactly 0 for identical inputs and lies in [0, 1].
// Distances are symmetric for ms_ssim, ssim and gmsd.
//
// Built-in metrics are stateless after their weights load; concurrent
// evaluation is safe.

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "rgbjnd/tensor.h"

namespace rgbjnd {
namespace iqa {

enum class MetricId { kMsSsim, kSsim, kDists, kGmsd, kFsim };

inline constexpr std::array<MetricId, 5> kAllMetrics = {
    MetricId::kMsSsim, MetricId::kSsim, MetricId::kDists, MetricId::kGmsd,
    MetricId::kFsim};

struct MetricScore {
  double raw = 0.0;       // metric-native score
  double distance = 0.0;  // normalized dissimilarity in [0, 1]
};

const char* MetricName(MetricId m);
// Accepts the canonical names plus the shorthand m1..m5; anything else
// raises RegistryError.
MetricId MetricFromName(const std::string& name);

// Evaluates metric m on a (3, h, w) pair. When grad is non-null it
// receives d(distance)/d(test) in the test image's shape. Values outside
// [0, 1] are evaluated as-is so saturated pixels keep their gradients;
// callers that want canonical scores pass clamped tensors. Both images
// need sides of at least 8; the windowed metrics (ms_ssim, ssim) need at
// least 11.
MetricScore EvaluateMetric(MetricId m, const Tensor& ref, const Tensor& test,
                           Tensor* grad = nullptr);

// ms_ssim with an explicit scale cap in [1, 5]. Scales whose downsampled
// sides would fall below the 11-pixel window are dropped and the scale
// weights renormalized; with a single scale the score equals ssim.
// EvaluateMetric uses the full 5-scale form.
MetricScore EvaluateMsSsim(const Tensor& ref, const Tensor& test,
                           int max_scales, Tensor* grad);

// True for every built-in; plugins are evaluation-only and return false.
bool MetricDifferentiable(MetricId m);
bool MetricDifferentiable(const std::string& name);

// Plugin metrics return a distance directly. Registration probes the
// callable on an identical pair and rejects it unless the result is 0;
// duplicate or built-in-colliding names are rejected. Plugins are never
// part of the training loss.
using PluginMetricFn =
    std::function<double(const Tensor& ref, const Tensor& test)>;
void RegisterPluginMetric(const std::string& name, PluginMetricFn fn);

// Built-ins (in m1..m5 order) followed by plugins in name order.
std::vector<std::string> RegisteredMetricNames();

// Dispatches to a built-in or plugin by name. Plugin results carry the
// returned distance in both fields.
MetricScore EvaluateMetricByName(const std::string& name, const Tensor& ref,
                                 const Tensor& test);

// The deep metric's feature backbone is a fixed convolutional pyramid
// whose weights are generated from the seed pinned in manifest.json and
// stored as a named-blob file. The file lives under $RGBJND_WEIGHTS_DIR
// (default "weights") and is written on first use if absent.
std::string DistsWeightsPath();
void WriteDistsBackbone(const std::string& path);

}  // namespace iqa
}  // namespace rgbjnd
