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

// Backend selection and the dispatching kern:: entry points.

#include <cstdlib>
#include <string_view>

#include "rgbjnd/kernels.h"

namespace rgbjnd {
namespace kern {

namespace {

Backend InitialBackend() {
  const char* e = std::getenv("RGBJND_BACKEND");
  if (e != nullptr && std::string_view(e) == "serial") {
    return Backend::kSerial;
  }
  return Backend::kParallel;
}

Backend g_backend = InitialBackend();

}  // namespace

Backend ActiveBackend() { return g_backend; }

void SetBackend(Backend b) { g_backend = b; }

const char* BackendName(Backend b) {
  return b == Backend::kSerial ? "serial" : "parallel";
}

// The dispatch bodies below are mechanical: pick the active namespace,
// forward every argument.

#define RGBJND_DISPATCH(name, ...)                       \
  if (g_backend == Backend::kSerial) {                   \
    return serial::name(__VA_ARGS__);                    \
  }                                                      \
  return parallel::name(__VA_ARGS__)

void Gemm(int m, int n, int k, const float* a, const float* b, float* c,
          bool accumulate) {
  RGBJND_DISPATCH(Gemm, m, n, k, a, b, c, accumulate);
}
void GemmNT(int m, int n, int k, const float* a, const float* b, float* c,
            bool accumulate) {
  RGBJND_DISPATCH(GemmNT, m, n, k, a, b, c, accumulate);
}
void GemmTN(int m, int n, int k, const float* a, const float* b, float* c,
            bool accumulate) {
  RGBJND_DISPATCH(GemmTN, m, n, k, a, b, c, accumulate);
}

double Sum(const float* x, size_t n) { RGBJND_DISPATCH(Sum, x, n); }
double SumAbs(const float* x, size_t n) { RGBJND_DISPATCH(SumAbs, x, n); }
double Dot(const float* a, const float* b, size_t n) {
  RGBJND_DISPATCH(Dot, a, b, n);
}
double SumSqDiff(const float* a, const float* b, size_t n) {
  RGBJND_DISPATCH(SumSqDiff, a, b, n);
}

void LeakyRelu(const float* x, size_t n, float slope, float* y) {
  RGBJND_DISPATCH(LeakyRelu, x, n, slope, y);
}
void LeakyReluGrad(const float* x, const float* gy, size_t n, float slope,
                   float* gx) {
  RGBJND_DISPATCH(LeakyReluGrad, x, gy, n, slope, gx);
}
void ScaledTanh(const float* x, size_t n, float* y) {
  RGBJND_DISPATCH(ScaledTanh, x, n, y);
}
void ScaledTanhGrad(const float* y, const float* gy, size_t n, float* gx) {
  RGBJND_DISPATCH(ScaledTanhGrad, y, gy, n, gx);
}
void Axpy(float alpha, const float* x, float* y, size_t n) {
  RGBJND_DISPATCH(Axpy, alpha, x, y, n);
}
void Scale(float* x, size_t n, float alpha) {
  RGBJND_DISPATCH(Scale, x, n, alpha);
}
void AdamStep(float* w, const float* g, float* m, float* v, size_t n,
              float lr, float beta1, float beta2, float eps, float inv_bias1,
              float inv_bias2) {
  RGBJND_DISPATCH(AdamStep, w, g, m, v, n, lr, beta1, beta2, eps, inv_bias1,
                  inv_bias2);
}

void SeparableCorrelateValid(const float* in, int h, int w, const float* taps,
                             int k, float* out) {
  RGBJND_DISPATCH(SeparableCorrelateValid, in, h, w, taps, k, out);
}
void SeparableCorrelateValidAdjoint(const float* gout, int h, int w,
                                    const float* taps, int k, float* gin) {
  RGBJND_DISPATCH(SeparableCorrelateValidAdjoint, gout, h, w, taps, k, gin);
}
void SeparableCorrelateReplicate(const float* in, int h, int w,
                                 const float* taps, int k, float* out) {
  RGBJND_DISPATCH(SeparableCorrelateReplicate, in, h, w, taps, k, out);
}
void Correlate3x3Zero(const float* in, int h, int w, const float* k9,
                      float* out) {
  RGBJND_DISPATCH(Correlate3x3Zero, in, h, w, k9, out);
}

void AvgPool2x2(const float* in, int h, int w, float* out) {
  RGBJND_DISPATCH(AvgPool2x2, in, h, w, out);
}
void AvgPool2x2Adjoint(const float* gout, int h, int w, float* gin) {
  RGBJND_DISPATCH(AvgPool2x2Adjoint, gout, h, w, gin);
}
void UpsampleNearest2x(const float* in, int h, int w, float* out) {
  RGBJND_DISPATCH(UpsampleNearest2x, in, h, w, out);
}
void UpsampleNearest2xAdjoint(const float* gout, int h, int w, float* gin) {
  RGBJND_DISPATCH(UpsampleNearest2xAdjoint, gout, h, w, gin);
}
void ResizeBilinear(const float* in, int h, int w, int oh, int ow,
                    float* out) {
  RGBJND_DISPATCH(ResizeBilinear, in, h, w, oh, ow, out);
}

void Conv3x3Forward(const float* in, int cin, int h, int w,
                    const float* weights, const float* bias, int cout,
                    int stride, PadMode pad, float* out) {
  RGBJND_DISPATCH(Conv3x3Forward, in, cin, h, w, weights, bias, cout, stride,
                  pad, out);
}
void Conv3x3BackwardInput(const float* gout, int cout, int h, int w,
                          const float* weights, int cin, int stride,
                          PadMode pad, float* gin) {
  RGBJND_DISPATCH(Conv3x3BackwardInput, gout, cout, h, w, weights, cin,
                  stride, pad, gin);
}
void Conv3x3BackwardParams(const float* in, int cin, int h, int w,
                           const float* gout, int cout, int stride,
                           PadMode pad, float* gweights, float* gbias,
                           bool accumulate) {
  RGBJND_DISPATCH(Conv3x3BackwardParams, in, cin, h, w, gout, cout, stride,
                  pad, gweights, gbias, accumulate);
}

void Conv1x1Forward(const float* in, int cin, int h, int w,
                    const float* weights, const float* bias, int cout,
                    int stride, float* out) {
  RGBJND_DISPATCH(Conv1x1Forward, in, cin, h, w, weights, bias, cout, stride,
                  out);
}
void Conv1x1BackwardInput(const float* gout, int cout, int h, int w,
                          const float* weights, int cin, int stride,
                          float* gin) {
  RGBJND_DISPATCH(Conv1x1BackwardInput, gout, cout, h, w, weights, cin,
                  stride, gin);
}
void Conv1x1BackwardParams(const float* in, int cin, int h, int w,
                           const float* gout, int cout, int stride,
                           float* gweights, float* gbias, bool accumulate) {
  RGBJND_DISPATCH(Conv1x1BackwardParams, in, cin, h, w, gout, cout, stride,
                  gweights, gbias, accumulate);
}

#undef RGBJND_DISPATCH

}  // namespace kern
}  // namespace rgbjnd
