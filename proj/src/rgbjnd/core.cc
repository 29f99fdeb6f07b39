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

#include "rgbjnd/core.h"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rgbjnd/kernels.h"

namespace rgbjnd {

void ValidateImageShape(const Tensor& t, const char* what) {
  if (t.c() != 3) {
    throw DimensionError(std::string(what) + ": expected 3 channels, got " +
                         t.ShapeStr());
  }
  if (t.h() < kMinImageSide || t.w() < kMinImageSide) {
    throw DimensionError(std::string(what) + ": image must be at least " +
                         std::to_string(kMinImageSide) + "x" +
                         std::to_string(kMinImageSide) + ", got " +
                         t.ShapeStr());
  }
}

void ValidateRange01(const Tensor& t, const char* what) {
  const float* p = t.data();
  for (size_t i = 0; i < t.size(); ++i) {
    if (!(p[i] >= 0.0f && p[i] <= 1.0f)) {
      throw DataError(std::string(what) +
                      ": value outside [0, 1] at flat index " +
                      std::to_string(i) + " (" + std::to_string(p[i]) + ")");
    }
  }
}

void Clamp01(Tensor& t) {
  float* p = t.data();
  for (size_t i = 0; i < t.size(); ++i) p[i] = std::clamp(p[i], 0.0f, 1.0f);
}

DistortedImage AddJnd(const Tensor& o, const Tensor& j, bool clamp) {
  RequireSameShape(o, j, "add_jnd");
  DistortedImage d;
  d.data = o;
  float* out = d.data.data();
  const float* delta = j.data();
  for (size_t i = 0; i < d.data.size(); ++i) out[i] += delta[i];
  if (clamp) {
    Clamp01(d.data);
    d.clamped = true;
  }
  return d;
}

Tensor StackFeatures(const Tensor& o, const Tensor& pc, const Tensor& va) {
  ValidateImageShape(o, "stack_features");
  if (pc.c() != 1 || va.c() != 1 || pc.h() != o.h() || pc.w() != o.w() ||
      va.h() != o.h() || va.w() != o.w()) {
    throw DimensionError("stack_features: feature maps must be (1, " +
                         std::to_string(o.h()) + ", " + std::to_string(o.w()) +
                         "), got " + pc.ShapeStr() + " and " + va.ShapeStr());
  }
  Tensor out(5, o.h(), o.w());
  size_t plane = static_cast<size_t>(o.h()) * o.w();
  std::memcpy(out.data(), o.data(), sizeof(float) * 3 * plane);
  std::memcpy(out.Plane(3), pc.data(), sizeof(float) * plane);
  std::memcpy(out.Plane(4), va.data(), sizeof(float) * plane);
  return out;
}

namespace {

double MseToDb(double mse) {
  if (mse <= 0.0) return kPsnrSentinelDb;
  double db = -10.0 * std::log10(mse);
  return std::clamp(db, 0.0, kPsnrSentinelDb);
}

}  // namespace

double Psnr(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "psnr");
  double mse = kern::SumSqDiff(a.data(), b.data(), a.size()) /
               static_cast<double>(a.size());
  return MseToDb(mse);
}

PsnrTriple PsnrPerChannel(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "psnr_per_channel");
  if (a.c() != 3) {
    throw DimensionError("psnr_per_channel: expected 3 channels, got " +
                         a.ShapeStr());
  }
  size_t plane = static_cast<size_t>(a.h()) * a.w();
  PsnrTriple t;
  double* out[3] = {&t.r, &t.g, &t.b};
  for (int c = 0; c < 3; ++c) {
    double mse = kern::SumSqDiff(a.Plane(c), b.Plane(c), plane) /
                 static_cast<double>(plane);
    *out[c] = MseToDb(mse);
  }
  return t;
}

}  // namespace rgbjnd
