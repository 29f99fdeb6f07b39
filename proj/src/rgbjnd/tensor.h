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

#include <cstddef>
#include <string>
#include <vector>

#include "rgbjnd/base.h"

namespace rgbjnd {

// Dense (channels, height, width) float tensor, row-major with channel as
// the slowest axis. This is the only pixel container in the toolkit; RGB
// images are Tensors with c == 3 and values in [0, 1].
class Tensor {
 public:
  Tensor() = default;

  Tensor(int c, int h, int w) : c_(c), h_(h), w_(w) {
    if (c <= 0 || h <= 0 || w <= 0) {
      throw DimensionError("tensor dims must be positive, got (" +
                           std::to_string(c) + ", " + std::to_string(h) +
                           ", " + std::to_string(w) + ")");
    }
    data_.assign(static_cast<size_t>(c) * h * w, 0.0f);
  }

  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& At(int c, int y, int x) {
    return data_[(static_cast<size_t>(c) * h_ + y) * w_ + x];
  }
  float At(int c, int y, int x) const {
    return data_[(static_cast<size_t>(c) * h_ + y) * w_ + x];
  }

  float* Plane(int c) { return data_.data() + static_cast<size_t>(c) * h_ * w_; }
  const float* Plane(int c) const {
    return data_.data() + static_cast<size_t>(c) * h_ * w_;
  }

  void Fill(float v) { data_.assign(data_.size(), v); }

  bool SameShape(const Tensor& o) const {
    return c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  std::string ShapeStr() const {
    return "(" + std::to_string(c_) + ", " + std::to_string(h_) + ", " +
           std::to_string(w_) + ")";
  }

 private:
  int c_ = 0, h_ = 0, w_ = 0;
  std::vector<float> data_;
};

inline void RequireSameShape(const Tensor& a, const Tensor& b,
                             const char* what) {
  if (!a.SameShape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " +
                         a.ShapeStr() + " vs " + b.ShapeStr());
  }
}

}  // namespace rgbjnd
