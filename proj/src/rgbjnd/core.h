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

// Canonical image conventions and the operations everything else builds
// on. Images are (3, h, w) float tensors in [0, 1] with h, w >= 8. JND
// maps share the image shape but are signed.

#include <string>

#include "rgbjnd/tensor.h"

namespace rgbjnd {

// Finite stand-in for +inf PSNR so reports stay serializable.
inline constexpr double kPsnrSentinelDb = 200.0;

inline constexpr int kMinImageSide = 8;

struct DistortedImage {
  Tensor data;
  // Set when the tensor went through [0, 1] clipping. IQA evaluation
  // requires clamped inputs; the training loss path keeps d unclamped so
  // gradients survive at saturated pixels.
  bool clamped = false;
};

struct PsnrTriple {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
};

// Shape contract for images: exactly (3, h, w), h and w at least 8.
void ValidateImageShape(const Tensor& t, const char* what);

// Value contract: every element in [0, 1]. Used by loaders and at module
// boundaries that require canonical-range inputs.
void ValidateRange01(const Tensor& t, const char* what);

void Clamp01(Tensor& t);

// d = o + j element-wise; clipped to [0, 1] when clamp is set.
DistortedImage AddJnd(const Tensor& o, const Tensor& j, bool clamp);

// (5, h, w) stack in fixed channel order (R, G, B, pattern-complexity,
// visual-attention). The two maps must be (1, h, w).
Tensor StackFeatures(const Tensor& o, const Tensor& pc, const Tensor& va);

// 10*log10(1 / MSE) with MAX = 1, MSE over all 3*h*w elements jointly.
// Zero MSE returns the sentinel; results are capped to [0, sentinel].
double Psnr(const Tensor& a, const Tensor& b);

// Same, with MSE taken independently per channel.
PsnrTriple PsnrPerChannel(const Tensor& a, const Tensor& b);

}  // namespace rgbjnd
