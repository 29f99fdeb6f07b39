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

// The FFT wrapper is checked against a direct O(N^2) DFT evaluation.

#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "rgbjnd/base.h"
#include "rgbjnd/fft.h"

using namespace rgbjnd;

namespace {

// Textbook DFT, no tricks: X[u,v] = sum_{y,x} x[y,x] e^{-2 pi i (uy/h + vx/w)}
std::vector<std::complex<double>> NaiveDft2(
    const std::vector<std::complex<double>>& in, int h, int w) {
  std::vector<std::complex<double>> out(in.size());
  const double tau = 2.0 * 3.14159265358979323846;
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double phase = -tau * (static_cast<double>(u) * y / h +
                                 static_cast<double>(v) * x / w);
          acc += in[y * w + x] *
                 std::complex<double>(std::cos(phase), std::sin(phase));
        }
      }
      out[u * w + v] = acc;
    }
  }
  return out;
}

std::vector<std::complex<double>> RandComplex(int n, uint64_t seed) {
  Pcg32 rng(seed);
  std::vector<std::complex<double>> v(n);
  for (auto& z : v) z = {rng.Uniform() - 0.5, rng.Uniform() - 0.5};
  return v;
}

}  // namespace

TEST_CASE("fft: matches the direct DFT on small grids") {
  for (auto [h, w] : {std::pair{8, 8}, std::pair{16, 12}, std::pair{7, 5}}) {
    auto in = RandComplex(h * w, 100 + h * w);
    auto expect = NaiveDft2(in, h, w);
    std::vector<std::complex<double>> got(in.size());
    fft::Fft2(in.data(), h, w, got.data());
    double max_err = 0.0;
    for (size_t i = 0; i < got.size(); ++i) {
      max_err = std::max(max_err, std::abs(got[i] - expect[i]));
    }
    CHECK(max_err < 1e-10);
  }
}

TEST_CASE("fft: inverse undoes forward, including scale") {
  int h = 24, w = 16;
  auto in = RandComplex(h * w, 55);
  std::vector<std::complex<double>> freq(in.size()), back(in.size());
  fft::Fft2(in.data(), h, w, freq.data());
  fft::Ifft2(freq.data(), h, w, back.data());
  double max_err = 0.0;
  for (size_t i = 0; i < in.size(); ++i) {
    max_err = std::max(max_err, std::abs(back[i] - in[i]));
  }
  CHECK(max_err < 1e-12);
}

TEST_CASE("fft: Parseval energy balance") {
  int h = 16, w = 16;
  auto in = RandComplex(h * w, 77);
  std::vector<std::complex<double>> freq(in.size());
  fft::Fft2(in.data(), h, w, freq.data());
  double espace = 0.0, efreq = 0.0;
  for (const auto& z : in) espace += std::norm(z);
  for (const auto& z : freq) efreq += std::norm(z);
  CHECK(espace == doctest::Approx(efreq / (h * w)).epsilon(1e-12));
}
