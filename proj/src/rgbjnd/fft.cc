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

#include "rgbjnd/fft.h"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

namespace rgbjnd {
namespace fft {

namespace {

// FFTW planning is not thread-safe; execution of a finished plan is.
// Plans are created with FFTW_UNALIGNED so they can execute on arbitrary
// caller buffers via fftw_execute_dft.
struct PlanPair {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
};

std::mutex g_mutex;
std::map<std::pair<int, int>, PlanPair>& PlanCache() {
  static std::map<std::pair<int, int>, PlanPair> cache;
  return cache;
}

PlanPair GetPlans(int h, int w) {
  std::lock_guard<std::mutex> lock(g_mutex);
  auto& cache = PlanCache();
  auto it = cache.find({h, w});
  if (it != cache.end()) return it->second;
  fftw_complex* buf = fftw_alloc_complex(static_cast<size_t>(h) * w);
  PlanPair p;
  p.fwd = fftw_plan_dft_2d(h, w, buf, buf, FFTW_FORWARD,
                           FFTW_ESTIMATE | FFTW_UNALIGNED);
  p.bwd = fftw_plan_dft_2d(h, w, buf, buf, FFTW_BACKWARD,
                           FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(buf);
  cache[{h, w}] = p;
  return p;
}

}  // namespace

void Fft2(const std::complex<double>* in, int h, int w,
          std::complex<double>* out) {
  PlanPair p = GetPlans(h, w);
  // std::complex<double> is layout-compatible with fftw_complex.
  fftw_execute_dft(
      p.fwd,
      reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
      reinterpret_cast<fftw_complex*>(out));
}

void Ifft2(const std::complex<double>* in, int h, int w,
           std::complex<double>* out) {
  PlanPair p = GetPlans(h, w);
  fftw_execute_dft(
      p.bwd,
      reinterpret_cast<fftw_complex*>(const_cast<std::complex<double>*>(in)),
      reinterpret_cast<fftw_complex*>(out));
  double scale = 1.0 / (static_cast<double>(h) * w);
  size_t n = static_cast<size_t>(h) * w;
  for (size_t i = 0; i < n; ++i) out[i] *= scale;
}

}  // namespace fft
}  // namespace rgbjnd
