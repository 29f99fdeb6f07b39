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

// Timing harness comparing the serial reference backend against the
// OpenMP/SIMD backend on the shapes that dominate training. Build and run
// manually; not part of the test suite.
//
//   ./bench_kernels [--quick]

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "rgbjnd/base.h"
#include "rgbjnd/kernels.h"

using namespace rgbjnd;

namespace {

double Now() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch())
      .count();
}

// Runs fn repeatedly until ~min_seconds elapse, returns seconds per call.
double TimeIt(const std::function<void()>& fn, double min_seconds) {
  fn();  // warm-up
  int reps = 1;
  for (;;) {
    double t0 = Now();
    for (int i = 0; i < reps; ++i) fn();
    double dt = Now() - t0;
    if (dt >= min_seconds || reps >= 1 << 20) return dt / reps;
    reps = dt <= 1e-9 ? reps * 16
                      : static_cast<int>(reps * (min_seconds / dt) + 1);
  }
}

std::vector<float> Rand(size_t n, uint64_t seed) {
  Pcg32 rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = 2.0f * rng.UniformF() - 1.0f;
  return v;
}

struct Row {
  std::string name;
  double flops;
  double serial_s;
  double parallel_s;
};

void Print(const Row& r) {
  double gs = r.flops / r.serial_s * 1e-9;
  double gp = r.flops / r.parallel_s * 1e-9;
  std::printf("%-34s %10.2f ms %8.2f GF/s | %10.2f ms %8.2f GF/s | x%.1f\n",
              r.name.c_str(), r.serial_s * 1e3, gs, r.parallel_s * 1e3, gp,
              r.parallel_s > 0 ? r.serial_s / r.parallel_s : 0.0);
}

}  // namespace

int main(int argc, char** argv) {
  bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  double budget = quick ? 0.05 : 0.4;
  double serial_budget = quick ? 0.05 : 0.2;

  std::printf("%-34s %25s | %25s | speedup\n", "kernel",
              "serial", "parallel");

  // GEMM shapes taken from the generator's convolutions on 176x176 crops
  // (as cout x (cin*9) times (cin*9) x pixels) plus a square case.
  struct GemmShape {
    const char* name;
    int m, n, k;
  };
  GemmShape shapes[] = {
      {"gemm 64x30976x45 (enc head)", 64, 30976, 45},
      {"gemm 128x7744x576 (enc mid)", 128, 7744, 576},
      {"gemm 256x1936x2304 (bottleneck)", 256, 1936, 2304},
      {"gemm 128x7744x2304 (dec mid)", 128, 7744, 2304},
      {"gemm 512x512x512 (square)", 512, 512, 512},
  };
  for (const auto& s : shapes) {
    auto a = Rand(static_cast<size_t>(s.m) * s.k, 1);
    auto b = Rand(static_cast<size_t>(s.k) * s.n, 2);
    std::vector<float> c(static_cast<size_t>(s.m) * s.n);
    Row row;
    row.name = s.name;
    row.flops = 2.0 * s.m * s.n * s.k;
    row.serial_s = TimeIt(
        [&] {
          kern::serial::Gemm(s.m, s.n, s.k, a.data(), b.data(), c.data(),
                             false);
        },
        serial_budget);
    row.parallel_s = TimeIt(
        [&] {
          kern::parallel::Gemm(s.m, s.n, s.k, a.data(), b.data(), c.data(),
                               false);
        },
        budget);
    Print(row);
  }

  // Convolution round trip at training scale.
  {
    int cin = 128, cout = 256, h = 88, w = 88, stride = 2;
    auto in = Rand(static_cast<size_t>(cin) * h * w, 3);
    auto wgt = Rand(static_cast<size_t>(cout) * cin * 9, 4);
    auto bias = Rand(cout, 5);
    int oh = kern::ConvOutDim(h, stride), ow = kern::ConvOutDim(w, stride);
    std::vector<float> out(static_cast<size_t>(cout) * oh * ow);
    double flops = 2.0 * cout * cin * 9.0 * oh * ow;
    Row row;
    row.name = "conv3x3 128->256 s2 @88";
    row.flops = flops;
    row.serial_s = TimeIt(
        [&] {
          kern::serial::Conv3x3Forward(in.data(), cin, h, w, wgt.data(),
                                       bias.data(), cout, stride,
                                       kern::PadMode::kReflect, out.data());
        },
        serial_budget);
    row.parallel_s = TimeIt(
        [&] {
          kern::parallel::Conv3x3Forward(in.data(), cin, h, w, wgt.data(),
                                         bias.data(), cout, stride,
                                         kern::PadMode::kReflect, out.data());
        },
        budget);
    Print(row);

    std::vector<float> gin(in.size());
    row.name = "conv3x3 backward-input";
    row.serial_s = TimeIt(
        [&] {
          kern::serial::Conv3x3BackwardInput(out.data(), cout, h, w,
                                             wgt.data(), cin, stride,
                                             kern::PadMode::kReflect,
                                             gin.data());
        },
        serial_budget);
    row.parallel_s = TimeIt(
        [&] {
          kern::parallel::Conv3x3BackwardInput(out.data(), cout, h, w,
                                               wgt.data(), cin, stride,
                                               kern::PadMode::kReflect,
                                               gin.data());
        },
        budget);
    Print(row);

    std::vector<float> gw(wgt.size()), gb(cout);
    row.name = "conv3x3 backward-params";
    row.serial_s = TimeIt(
        [&] {
          kern::serial::Conv3x3BackwardParams(in.data(), cin, h, w,
                                              out.data(), cout, stride,
                                              kern::PadMode::kReflect,
                                              gw.data(), gb.data(), false);
        },
        serial_budget);
    row.parallel_s = TimeIt(
        [&] {
          kern::parallel::Conv3x3BackwardParams(in.data(), cin, h, w,
                                                out.data(), cout, stride,
                                                kern::PadMode::kReflect,
                                                gw.data(), gb.data(), false);
        },
        budget);
    Print(row);
  }

  // Bandwidth-bound kernels.
  {
    size_t n = 1 << 24;
    auto x = Rand(n, 6);
    std::vector<float> y(n);
    Row row;
    row.name = "leaky_relu 16M";
    row.flops = static_cast<double>(n);
    row.serial_s = TimeIt(
        [&] { kern::serial::LeakyRelu(x.data(), n, 0.2f, y.data()); },
        serial_budget);
    row.parallel_s = TimeIt(
        [&] { kern::parallel::LeakyRelu(x.data(), n, 0.2f, y.data()); },
        budget);
    Print(row);

    row.name = "sum 16M";
    row.serial_s =
        TimeIt([&] { kern::serial::Sum(x.data(), n); }, serial_budget);
    row.parallel_s =
        TimeIt([&] { kern::parallel::Sum(x.data(), n); }, budget);
    Print(row);
  }

  return 0;
}
