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

// Compute kernels behind everything hot: GEMM, convolutions, reductions,
// activations, filters. Two complete implementations live side by side:
//
//   kern::serial    plain loops, the reference that parity tests trust
//   kern::parallel  OpenMP + SIMD, the default at runtime
//
// Unqualified kern:: entry points dispatch on the active backend
// (RGBJND_BACKEND=serial|parallel, default parallel). Reductions follow
// the same chunk schedule in both backends, so their results are
// bit-equal regardless of backend or thread count.

#include <cstddef>
#include <cstdint>

namespace rgbjnd {
namespace kern {

enum class Backend { kSerial, kParallel };

// Active backend. Initialized once from RGBJND_BACKEND; SetBackend wins
// over the environment afterwards.
Backend ActiveBackend();
void SetBackend(Backend b);
const char* BackendName(Backend b);

enum class PadMode { kZero, kReflect };

// Output side length of a padded 3x3 (pad 1) or unpadded 1x1 convolution.
inline int ConvOutDim(int in, int stride) { return (in - 1) / stride + 1; }

// Chunk length for deterministic reductions. Partial sums are formed per
// chunk in index order and then combined in chunk order.
inline constexpr size_t kReduceChunk = 4096;

namespace serial {
#include "rgbjnd/kernels_api.inc"
}  // namespace serial

namespace parallel {
#include "rgbjnd/kernels_api.inc"
}  // namespace parallel

#include "rgbjnd/kernels_api.inc"

namespace detail {

// Reflect-101 index mapping: -1 -> 1, n -> n - 2. Only single-step
// reflection is supported, which covers pad 1 on sides >= 2.
inline int ReflectIndex(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace detail
}  // namespace kern
}  // namespace rgbjnd
