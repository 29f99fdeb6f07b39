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

// Handcrafted inputs: per-channel image gradients and their magnitude sum
// G, the pattern-complexity map, and the pluggable visual-attention
// (saliency) map.

#include <functional>
#include <string>
#include <vector>

#include "rgbjnd/tensor.h"

namespace rgbjnd {

enum class GradientOp {
  kForwardDiff,  // default: forward differences, replicate at last row/col
  kSobel,        // behind a flag for sensitivity studies
};

struct GradientField {
  Tensor g1;  // vertical gradient, (3, h, w)
  Tensor g2;  // horizontal gradient, (3, h, w)
  // G: sum over channels and pixels of sqrt(g1^2 + g2^2). Zero iff the
  // image is constant per channel (forward-difference operator).
  double magnitude_sum = 0.0;
};

GradientField ComputeGradientField(const Tensor& o,
                                   GradientOp op = GradientOp::kForwardDiff);

// Orientation-diversity measure: gradient orientations on the channel
// mean are quantized into kOrientationBins bins; each pixel's value is
// (occupied bins in the window) / kOrientationBins. Window must be odd,
// >= 3, and fit inside the image.
inline constexpr int kOrientationBins = 12;
inline constexpr float kOrientationMagThreshold = 1e-4f;
Tensor PatternComplexity(const Tensor& o, int window = 5);

// Saliency providers map an image to a (1, h, w) map in [0, 1],
// max-normalized. The registry is append-only; built-ins:
//   "spectral_residual"  deterministic classical saliency (default)
//   "file:<path>"        precomputed map (gray PNG or RSAL raw float),
//                        resampled to (h, w) with a logged warning on
//                        size mismatch
using SaliencyProvider = std::function<Tensor(const Tensor&)>;

void RegisterSaliencyProvider(const std::string& name, SaliencyProvider fn);
std::vector<std::string> SaliencyProviderNames();
Tensor VisualAttention(const Tensor& o,
                       const std::string& provider = "spectral_residual");

// Exposed for direct testing of the default provider.
Tensor SpectralResidualSaliency(const Tensor& o);

}  // namespace rgbjnd
