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

// Thin 2-D complex FFT wrapper (double precision). Plans are cached per
// (h, w) behind a mutex; execution is thread-safe.

#include <complex>

namespace rgbjnd {
namespace fft {

// out = DFT2(in), rows of length w, h rows. in and out may alias.
void Fft2(const std::complex<double>* in, int h, int w,
          std::complex<double>* out);

// Inverse transform including the 1/(h*w) scale, so Ifft2(Fft2(x)) == x.
void Ifft2(const std::complex<double>* in, int h, int w,
           std::complex<double>* out);

}  // namespace fft
}  // namespace rgbjnd
