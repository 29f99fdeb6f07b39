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

#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "rgbjnd/base.h"
#include "rgbjnd/tensor.h"

namespace rgbjnd::testutil {

inline std::vector<float> RandVec(size_t n, uint64_t seed, float lo = -1.0f,
                                  float hi = 1.0f) {
  Pcg32 rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.UniformF();
  return v;
}

inline Tensor RandImage(int c, int h, int w, uint64_t seed) {
  Pcg32 rng(seed);
  Tensor t(c, h, w);
  for (size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.UniformF();
  return t;
}

inline float MaxAbsDiff(const float* a, const float* b, size_t n) {
  float m = 0.0f;
  for (size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

inline float MaxAbs(const float* a, size_t n) {
  float m = 0.0f;
  for (size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(a[i]));
  return m;
}

// Points RGBJND_WEIGHTS_DIR at a per-process temp directory for the
// lifetime of the object, so tests never touch a real weights cache.
class ScopedWeightsDir {
 public:
  ScopedWeightsDir() {
    namespace fs = std::filesystem;
    const char* prev = std::getenv("RGBJND_WEIGHTS_DIR");
    if (prev) {
      had_prev_ = true;
      prev_ = prev;
    }
    dir_ = (fs::temp_directory_path() / "rgbjnd_test_weights").string();
    fs::create_directories(dir_);
    setenv("RGBJND_WEIGHTS_DIR", dir_.c_str(), 1);
  }
  ~ScopedWeightsDir() {
    if (had_prev_) {
      setenv("RGBJND_WEIGHTS_DIR", prev_.c_str(), 1);
    } else {
      unsetenv("RGBJND_WEIGHTS_DIR");
    }
  }
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::string prev_;
  bool had_prev_ = false;
};

}  // namespace rgbjnd::testutil
