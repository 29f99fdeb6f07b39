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

#include "rgbjnd/iqa.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <mutex>

#include "rgbjnd/core.h"
#include "rgbjnd/fft.h"
#include "rgbjnd/kernels.h"
#include "rgbjnd/nn.h"

namespace rgbjnd {
namespace iqa {
namespace {

constexpr double kPi = 3.14159265358979323846;

// Windowed-similarity constants on unit pixel range: (K1*L)^2 and
// (K2*L)^2 with K1 = 0.01, K2 = 0.03, L = 1.
constexpr double kC1 = 1e-4;
constexpr double kC2 = 9e-4;
constexpr int kWin = 11;
constexpr double kWinSigma = 1.5;

// Multi-scale weights; unused trailing scales are dropped and the rest
// renormalized. Per-scale pooled terms are floored before the power so
// the product stays positive (anticorrelated windows can pool negative).
constexpr double kMsWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
constexpr double kMsFloor = 1e-6;

// Gradient-similarity constant on unit range (published byte-scale 170,
// rounded as 0.0026 after /255^2).
constexpr double kGmsdC = 0.0026;

// Phase-congruency similarity constant (unitless) and gradient constant
// (published byte-scale 160 mapped to unit range).
constexpr double kFsimT1 = 0.85;
constexpr double kFsimT2 = 160.0 / 65025.0;
constexpr double kFsimEps = 1e-4;

// Deep-metric stabilizers; both statistics live on feature scale.
constexpr double kDistsC1 = 1e-6;
constexpr double kDistsC2 = 1e-6;

constexpr double kTiny = 1e-300;

using Vec = std::vector<double>;

const char* kBuiltinNames[5] = {"ms_ssim", "ssim", "dists", "gmsd", "fsim"};

void ValidateInputs(MetricId m, const Tensor& ref, const Tensor& test) {
  if (ref.c() != 3) {
    throw DimensionError("metric inputs must be (3, h, w), got " +
                         ref.ShapeStr());
  }
  RequireSameShape(ref, test, "metric inputs");
  int side = std::min(ref.h(), ref.w());
  if (side < kMinImageSide) {
    throw ParameterError("metric inputs need sides of at least 8, got " +
                         ref.ShapeStr());
  }
  if ((m == MetricId::kSsim || m == MetricId::kMsSsim) && side < kWin) {
    throw ParameterError(std::string(MetricName(m)) +
                         " needs sides of at least 11, got " + ref.ShapeStr());
  }
}

Vec PlaneD(const float* p, size_t n) {
  Vec v(n);
  for (size_t i = 0; i < n; ++i) v[i] = p[i];
  return v;
}

// ---------------------------------------------------------------------
// Double-precision local filtering helpers.

const Vec& GaussTaps() {
  static const Vec taps = [] {
    Vec g(kWin);
    double s = 0.0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - (kWin - 1) / 2.0;
      g[i] = std::exp(-d * d / (2.0 * kWinSigma * kWinSigma));
      s += g[i];
    }
    for (auto& v : g) v /= s;
    return g;
  }();
  return taps;
}

// Valid-region separable correlation: out is (h-10) x (w-10).
void SepValid(const Vec& in, int h, int w, Vec& out) {
  const Vec& t = GaussTaps();
  int ow = w - kWin + 1, oh = h - kWin + 1;
  Vec tmp(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int b = 0; b < kWin; ++b) acc += t[b] * in[y * (size_t)w + j + b];
      tmp[y * (size_t)ow + j] = acc;
    }
  }
  out.assign(static_cast<size_t>(oh) * ow, 0.0);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (int a = 0; a < kWin; ++a) acc += t[a] * tmp[(i + a) * (size_t)ow + j];
      out[i * (size_t)ow + j] = acc;
    }
  }
}

// Adjoint of SepValid; h, w are the input dims and gin is accumulated.
void SepValidAdjointAdd(const Vec& gout, int h, int w, double scale,
                        Vec& gin) {
  const Vec& t = GaussTaps();
  int ow = w - kWin + 1, oh = h - kWin + 1;
  Vec gtmp(static_cast<size_t>(h) * ow, 0.0);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double g = scale * gout[i * (size_t)ow + j];
      for (int a = 0; a < kWin; ++a) gtmp[(i + a) * (size_t)ow + j] += t[a] * g;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int j = 0; j < ow; ++j) {
      double g = gtmp[y * (size_t)ow + j];
      if (g == 0.0) continue;
      for (int b = 0; b < kWin; ++b) gin[y * (size_t)w + j + b] += t[b] * g;
    }
  }
}

void Pool2(const Vec& in, int h, int w, Vec& out) {
  int oh = h / 2, ow = w / 2;
  out.assign(static_cast<size_t>(oh) * ow, 0.0);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      const double* p = in.data() + (2 * i) * (size_t)w + 2 * j;
      out[i * (size_t)ow + j] = 0.25 * (p[0] + p[1] + p[w] + p[w + 1]);
    }
  }
}

// h, w are the pooling input dims; trailing odd row/column gets nothing.
void Pool2Adjoint(const Vec& gout, int h, int w, Vec& gin) {
  int oh = h / 2, ow = w / 2;
  gin.assign(static_cast<size_t>(h) * w, 0.0);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      double g = 0.25 * gout[i * (size_t)ow + j];
      double* p = gin.data() + (2 * i) * (size_t)w + 2 * j;
      p[0] += g;
      p[1] += g;
      p[w] += g;
      p[w + 1] += g;
    }
  }
}

void Corr3x3SameZero(const Vec& in, int h, int w, const double k[9],
                     Vec& out) {
  out.assign(static_cast<size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int a = 0; a < 3; ++a) {
        int yy = y + a - 1;
        if (yy < 0 || yy >= h) continue;
        for (int b = 0; b < 3; ++b) {
          int xx = x + b - 1;
          if (xx < 0 || xx >= w) continue;
          acc += k[a * 3 + b] * in[yy * (size_t)w + xx];
        }
      }
      out[y * (size_t)w + x] = acc;
    }
  }
}

// Adjoint of the zero-border correlation: correlation with the kernel
// rotated by 180 degrees.
void Corr3x3SameZeroAdjointAdd(const Vec& gout, int h, int w,
                               const double k[9], Vec& gin) {
  double rot[9];
  for (int i = 0; i < 9; ++i) rot[i] = k[8 - i];
  Vec tmp;
  Corr3x3SameZero(gout, h, w, rot, tmp);
  for (size_t i = 0; i < gin.size(); ++i) gin[i] += tmp[i];
}

// ---------------------------------------------------------------------
// Windowed similarity shared by ssim and ms_ssim.

// Pooled mean over all interior window positions of l*cs (full) or cs
// alone. When gy is non-null, gscale * d(pooled)/d(y) is accumulated
// into it.
double SsimPlanePooled(const Vec& x, const Vec& y, int h, int w, bool full,
                       double gscale, Vec* gy) {
  size_t n = x.size();
  Vec xx(n), yy(n), xy(n);
  for (size_t i = 0; i < n; ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  Vec mx, my, sxx, syy, sxy;
  SepValid(x, h, w, mx);
  SepValid(y, h, w, my);
  SepValid(xx, h, w, sxx);
  SepValid(yy, h, w, syy);
  SepValid(xy, h, w, sxy);

  size_t np = mx.size();
  double acc = 0.0;
  Vec a0, a1, a2;
  if (gy) {
    a0.assign(np, 0.0);
    a1.assign(np, 0.0);
    a2.assign(np, 0.0);
  }
  for (size_t p = 0; p < np; ++p) {
    double sx2 = sxx[p] - mx[p] * mx[p];
    double sy2 = syy[p] - my[p] * my[p];
    double sxyv = sxy[p] - mx[p] * my[p];
    double b2 = sx2 + sy2 + kC2;
    double cs = (2.0 * sxyv + kC2) / b2;
    if (full) {
      // 2ab written as (a^2 + b^2) - (a - b)^2: the correction term is
      // exactly zero for identical inputs whatever the compiler fuses,
      // so l == 1 bitwise and identity distance stays exactly 0.
      double mm = mx[p] * mx[p] + my[p] * my[p];
      double md = mx[p] - my[p];
      double b1 = mm + kC1;
      double l = (mm - md * md + kC1) / b1;
      double s = l * cs;
      acc += s;
      if (gy) {
        a0[p] = 2.0 * cs * (mx[p] - l * my[p]) / b1 + 2.0 * s * my[p] / b2 -
                2.0 * l * mx[p] / b2;
        a1[p] = -2.0 * s / b2;
        a2[p] = 2.0 * l / b2;
      }
    } else {
      acc += cs;
      if (gy) {
        a0[p] = 2.0 * (cs * my[p] - mx[p]) / b2;
        a1[p] = -2.0 * cs / b2;
        a2[p] = 2.0 / b2;
      }
    }
  }
  double pooled = acc / static_cast<double>(np);
  if (gy) {
    // d(pooled)/dy(q) = mean over windows of w(p,q) *
    //   [a0(p) + a1(p) y(q) + a2(p) x(q)].
    double s = gscale / static_cast<double>(np);
    Vec adj0(n, 0.0), adj1(n, 0.0), adj2(n, 0.0);
    SepValidAdjointAdd(a0, h, w, 1.0, adj0);
    SepValidAdjointAdd(a1, h, w, 1.0, adj1);
    SepValidAdjointAdd(a2, h, w, 1.0, adj2);
    for (size_t q = 0; q < n; ++q) {
      (*gy)[q] += s * (adj0[q] + adj1[q] * y[q] + adj2[q] * x[q]);
    }
  }
  return pooled;
}

// Largest usable scale count: every used scale keeps both sides at or
// above the window.
int UsableScales(int h, int w, int max_scales) {
  int m = 0;
  while (m < max_scales && std::min(h, w) >= kWin) {
    ++m;
    h /= 2;
    w /= 2;
  }
  return m;
}

double MsSsimChannel(const Vec& x0, const Vec& y0, int h0, int w0,
                     int max_scales, Vec* grad) {
  struct Level {
    Vec x, y;
    int h, w;
  };
  int m = UsableScales(h0, w0, max_scales);
  std::vector<Level> lv(m);
  lv[0] = {x0, y0, h0, w0};
  for (int k = 1; k < m; ++k) {
    Pool2(lv[k - 1].x, lv[k - 1].h, lv[k - 1].w, lv[k].x);
    Pool2(lv[k - 1].y, lv[k - 1].h, lv[k - 1].w, lv[k].y);
    lv[k].h = lv[k - 1].h / 2;
    lv[k].w = lv[k - 1].w / 2;
  }
  double wsum = 0.0;
  for (int k = 0; k < m; ++k) wsum += kMsWeights[k];

  std::vector<double> term(m), floored(m);
  for (int k = 0; k < m; ++k) {
    term[k] = SsimPlanePooled(lv[k].x, lv[k].y, lv[k].h, lv[k].w, k == m - 1,
                              0.0, nullptr);
    floored[k] = std::max(term[k], kMsFloor);
  }
  double val = 1.0;
  for (int k = 0; k < m; ++k) val *= std::pow(floored[k], kMsWeights[k] / wsum);

  if (grad) {
    grad->assign(x0.size(), 0.0);
    for (int k = 0; k < m; ++k) {
      if (term[k] <= kMsFloor) continue;
      double coeff = val * (kMsWeights[k] / wsum) / floored[k];
      Vec gk(lv[k].x.size(), 0.0);
      SsimPlanePooled(lv[k].x, lv[k].y, lv[k].h, lv[k].w, k == m - 1, coeff,
                      &gk);
      for (int j = k; j > 0; --j) {
        Vec up;
        Pool2Adjoint(gk, lv[j - 1].h, lv[j - 1].w, up);
        gk.swap(up);
      }
      for (size_t q = 0; q < grad->size(); ++q) (*grad)[q] += gk[q];
    }
  }
  return val;
}

// Wraps a similarity raw value into a score; grads were produced as
// d(raw)/d(test) and flip sign here. Out-of-range distances clamp and
// zero the gradient.
MetricScore FinishSimilarity(double raw, Tensor* grad) {
  MetricScore s;
  s.raw = raw;
  double d = 1.0 - raw;
  if (d < 0.0 || d > 1.0) {
    s.distance = std::clamp(d, 0.0, 1.0);
    if (grad) grad->Fill(0.0f);
  } else {
    s.distance = d;
    if (grad) {
      for (size_t i = 0; i < grad->size(); ++i) {
        grad->data()[i] = -grad->data()[i];
      }
    }
  }
  return s;
}

MetricScore MsSsimMetric(const Tensor& ref, const Tensor& test,
                         int max_scales, Tensor* grad) {
  int h = ref.h(), w = ref.w();
  size_t n = static_cast<size_t>(h) * w;
  if (grad) *grad = Tensor(3, h, w);
  // Channel values are summed and divided once so identical inputs give
  // exactly (1+1+1)/3 == 1 and therefore distance exactly 0.
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    Vec x = PlaneD(ref.Plane(c), n), y = PlaneD(test.Plane(c), n);
    Vec gc;
    acc += MsSsimChannel(x, y, h, w, max_scales, grad ? &gc : nullptr);
    if (grad) {
      float* gp = grad->Plane(c);
      for (size_t q = 0; q < n; ++q) {
        gp[q] = static_cast<float>(gc[q] / 3.0);
      }
    }
  }
  return FinishSimilarity(acc / 3.0, grad);
}

MetricScore SsimMetric(const Tensor& ref, const Tensor& test, Tensor* grad) {
  int h = ref.h(), w = ref.w();
  size_t n = static_cast<size_t>(h) * w;
  if (grad) *grad = Tensor(3, h, w);
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    Vec x = PlaneD(ref.Plane(c), n), y = PlaneD(test.Plane(c), n);
    Vec gc;
    if (grad) gc.assign(n, 0.0);
    acc += SsimPlanePooled(x, y, h, w, true, 1.0 / 3.0, grad ? &gc : nullptr);
    if (grad) {
      float* gp = grad->Plane(c);
      for (size_t q = 0; q < n; ++q) gp[q] = static_cast<float>(gc[q]);
    }
  }
  return FinishSimilarity(acc / 3.0, grad);
}

// ---------------------------------------------------------------------
// Gradient-magnitude similarity deviation.

const double kPrewittX[9] = {1.0 / 3, 0, -1.0 / 3, 1.0 / 3, 0,
                             -1.0 / 3, 1.0 / 3, 0, -1.0 / 3};
const double kPrewittY[9] = {1.0 / 3,  1.0 / 3,  1.0 / 3, 0, 0, 0,
                             -1.0 / 3, -1.0 / 3, -1.0 / 3};

void GradMag(const Vec& p, int h, int w, const double kx[9],
             const double ky[9], Vec& gx, Vec& gy, Vec& mag) {
  Corr3x3SameZero(p, h, w, kx, gx);
  Corr3x3SameZero(p, h, w, ky, gy);
  mag.resize(p.size());
  for (size_t i = 0; i < p.size(); ++i) {
    mag[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
  }
}

double GmsdChannel(const Vec& x, const Vec& y, int h, int w, double gscale,
                   Vec* grad) {
  Vec agx, agy, a, bgx, bgy, b;
  GradMag(x, h, w, kPrewittX, kPrewittY, agx, agy, a);
  GradMag(y, h, w, kPrewittX, kPrewittY, bgx, bgy, b);
  size_t n = x.size();
  Vec q(n);
  double s1 = 0.0, s2 = 0.0;
  for (size_t i = 0; i < n; ++i) {
    // Fusion-proof 2ab so q == 1 bitwise on identical inputs.
    double ss = a[i] * a[i] + b[i] * b[i];
    double dd = a[i] - b[i];
    q[i] = (ss - dd * dd + kGmsdC) / (ss + kGmsdC);
    s1 += q[i];
    s2 += q[i] * q[i];
  }
  double nn = static_cast<double>(n);
  double mean = s1 / nn;
  double var = std::max(0.0, s2 / nn - mean * mean);
  double dev = std::sqrt(var);
  if (grad) {
    // The value path keeps the exact sqrt; the gradient path regularizes
    // it so identical inputs give a zero gradient instead of NaN.
    double dev_eff = std::sqrt(var + 1e-12);
    Vec dgx(n, 0.0), dgy(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      double gq = gscale * (q[i] - mean) / (nn * dev_eff);
      double db = gq * 2.0 * (a[i] - q[i] * b[i]) /
                  (a[i] * a[i] + b[i] * b[i] + kGmsdC);
      double denom = std::max(b[i], kTiny);
      dgx[i] = db * bgx[i] / denom;
      dgy[i] = db * bgy[i] / denom;
    }
    Corr3x3SameZeroAdjointAdd(dgx, h, w, kPrewittX, *grad);
    Corr3x3SameZeroAdjointAdd(dgy, h, w, kPrewittY, *grad);
  }
  return dev;
}

MetricScore GmsdMetric(const Tensor& ref, const Tensor& test, Tensor* grad) {
  int h = ref.h(), w = ref.w();
  size_t n = static_cast<size_t>(h) * w;
  if (grad) *grad = Tensor(3, h, w);
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    Vec x = PlaneD(ref.Plane(c), n), y = PlaneD(test.Plane(c), n);
    Vec gc;
    if (grad) gc.assign(n, 0.0);
    acc += GmsdChannel(x, y, h, w, 1.0 / 3.0, grad ? &gc : nullptr);
    if (grad) {
      float* gp = grad->Plane(c);
      for (size_t q = 0; q < n; ++q) gp[q] = static_cast<float>(gc[q]);
    }
  }
  MetricScore s;
  s.raw = acc / 3.0;
  if (s.raw > 1.0) {
    s.distance = 1.0;
    if (grad) grad->Fill(0.0f);
  } else {
    s.distance = s.raw;
  }
  return s;
}

// ---------------------------------------------------------------------
// Phase-congruency + gradient similarity on Rec.601 luminance.
//
// The congruency map comes from a 4-scale, 4-orientation log-Gabor bank:
// min wavelength 6, scale multiplier 2, sigmaOnf 0.55, one-sided angular
// Gaussians of width (pi/4)/1.2, a Butterworth low-pass (cutoff 0.45,
// order 15) on the radial response, epsilon 1e-4 and a zero noise floor.
// Frequencies use the unshifted convention f(v) = (v <= n/2 ? v : v-n)/n.

constexpr int kFsimScales = 4;
constexpr int kFsimOrients = 4;

const double kScharrX[9] = {3.0 / 16,  0, -3.0 / 16, 10.0 / 16, 0,
                            -10.0 / 16, 3.0 / 16, 0, -3.0 / 16};
const double kScharrY[9] = {3.0 / 16, 10.0 / 16, 3.0 / 16, 0, 0, 0,
                            -3.0 / 16, -10.0 / 16, -3.0 / 16};

struct GaborBank {
  // filter[s][o], each h*w, real and non-negative.
  std::vector<Vec> filters;
  const Vec& at(int s, int o) const { return filters[s * kFsimOrients + o]; }
};

const GaborBank& BankFor(int h, int w) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, GaborBank> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(h, w);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  size_t n = static_cast<size_t>(h) * w;
  Vec rad(n), theta(n);
  for (int v = 0; v < h; ++v) {
    double fy = (v <= h / 2 ? v : v - h) / static_cast<double>(h);
    for (int u = 0; u < w; ++u) {
      double fx = (u <= w / 2 ? u : u - w) / static_cast<double>(w);
      size_t i = v * (size_t)w + u;
      rad[i] = std::sqrt(fx * fx + fy * fy);
      theta[i] = std::atan2(fy, fx);
    }
  }
  rad[0] = 1.0;

  const double sigma_theta = (kPi / 4.0) / 1.2;
  const double log_sigma2 = 2.0 * std::log(0.55) * std::log(0.55);
  Vec lowpass(n);
  for (size_t i = 0; i < n; ++i) {
    lowpass[i] = 1.0 / (1.0 + std::pow(rad[i] / 0.45, 30.0));
  }
  std::vector<Vec> radial(kFsimScales);
  for (int s = 0; s < kFsimScales; ++s) {
    double f0 = 1.0 / (6.0 * std::pow(2.0, s));
    radial[s].resize(n);
    for (size_t i = 0; i < n; ++i) {
      double lr = std::log(rad[i] / f0);
      radial[s][i] = std::exp(-lr * lr / log_sigma2) * lowpass[i];
    }
    radial[s][0] = 0.0;
  }
  std::vector<Vec> spread(kFsimOrients);
  for (int o = 0; o < kFsimOrients; ++o) {
    double th0 = o * kPi / kFsimOrients;
    double c0 = std::cos(th0), s0 = std::sin(th0);
    spread[o].resize(n);
    for (size_t i = 0; i < n; ++i) {
      double ds = std::sin(theta[i]) * c0 - std::cos(theta[i]) * s0;
      double dc = std::cos(theta[i]) * c0 + std::sin(theta[i]) * s0;
      double dt = std::fabs(std::atan2(ds, dc));
      spread[o][i] = std::exp(-dt * dt / (2.0 * sigma_theta * sigma_theta));
    }
  }
  GaborBank bank;
  bank.filters.resize(kFsimScales * kFsimOrients);
  for (int s = 0; s < kFsimScales; ++s) {
    for (int o = 0; o < kFsimOrients; ++o) {
      Vec f(n);
      for (size_t i = 0; i < n; ++i) f[i] = radial[s][i] * spread[o][i];
      bank.filters[s * kFsimOrients + o] = std::move(f);
    }
  }
  return cache.emplace(key, std::move(bank)).first->second;
}

using Cpx = std::complex<double>;

// Per-image congruency state kept when the caller needs the backward
// pass.
struct PcState {
  Vec pc;
  // Indexed [o][s].
  std::vector<std::vector<Vec>> e, o_part, an;
  std::vector<Vec> sum_e, sum_o, sum_an;
};

void ComputePc(const Vec& lum, int h, int w, bool keep, PcState& st) {
  const GaborBank& bank = BankFor(h, w);
  size_t n = lum.size();
  std::vector<Cpx> spec(n), filtered(n);
  for (size_t i = 0; i < n; ++i) spec[i] = lum[i];
  fft::Fft2(spec.data(), h, w, spec.data());

  st.pc.assign(n, 0.0);
  if (keep) {
    st.e.assign(kFsimOrients, std::vector<Vec>(kFsimScales));
    st.o_part.assign(kFsimOrients, std::vector<Vec>(kFsimScales));
    st.an.assign(kFsimOrients, std::vector<Vec>(kFsimScales));
    st.sum_e.assign(kFsimOrients, Vec());
    st.sum_o.assign(kFsimOrients, Vec());
    st.sum_an.assign(kFsimOrients, Vec());
  }

  std::vector<Vec> es(kFsimScales), os(kFsimScales);
  for (int o = 0; o < kFsimOrients; ++o) {
    Vec sum_e(n, 0.0), sum_o(n, 0.0), sum_an(n, 0.0);
    for (int s = 0; s < kFsimScales; ++s) {
      const Vec& fil = bank.at(s, o);
      for (size_t i = 0; i < n; ++i) filtered[i] = spec[i] * fil[i];
      fft::Ifft2(filtered.data(), h, w, filtered.data());
      es[s].resize(n);
      os[s].resize(n);
      if (keep) st.an[o][s].resize(n);
      for (size_t i = 0; i < n; ++i) {
        double re = filtered[i].real(), im = filtered[i].imag();
        es[s][i] = re;
        os[s][i] = im;
        double amp = std::sqrt(re * re + im * im);
        sum_e[i] += re;
        sum_o[i] += im;
        sum_an[i] += amp;
        if (keep) st.an[o][s][i] = amp;
      }
      if (keep) {
        st.e[o][s] = es[s];
        st.o_part[o][s] = os[s];
      }
    }
    for (size_t i = 0; i < n; ++i) {
      double xe =
          std::sqrt(sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]) + kFsimEps;
      double me = sum_e[i] / xe, mo = sum_o[i] / xe;
      double energy = 0.0;
      for (int s = 0; s < kFsimScales; ++s) {
        energy += es[s][i] * me + os[s][i] * mo -
                  std::fabs(es[s][i] * mo - os[s][i] * me);
      }
      st.pc[i] += std::max(energy, 0.0) / (sum_an[i] + kFsimEps);
    }
    if (keep) {
      st.sum_e[o] = std::move(sum_e);
      st.sum_o[o] = std::move(sum_o);
      st.sum_an[o] = std::move(sum_an);
    }
  }
}

// Backward through the congruency map: gpc holds dL/dpc, the result
// dL/dlum is accumulated into glum. The spectral adjoint of a real
// filter is the identical filtering applied to the complex cotangent.
void PcBackwardAdd(const PcState& st, const Vec& gpc, int h, int w,
                   Vec& glum) {
  const GaborBank& bank = BankFor(h, w);
  size_t n = gpc.size();
  std::vector<Cpx> acc_spec(n, Cpx(0.0, 0.0));
  std::vector<Cpx> work(n);
  for (int o = 0; o < kFsimOrients; ++o) {
    const Vec& se = st.sum_e[o];
    const Vec& so = st.sum_o[o];
    const Vec& sa = st.sum_an[o];
    // Per-scale complex cotangents for this orientation.
    std::vector<Vec> ge(kFsimScales, Vec(n, 0.0));
    std::vector<Vec> go(kFsimScales, Vec(n, 0.0));
    for (size_t i = 0; i < n; ++i) {
      double rho = std::sqrt(se[i] * se[i] + so[i] * so[i]);
      double xe = rho + kFsimEps;
      double me = se[i] / xe, mo = so[i] / xe;
      double energy = 0.0;
      double d_me = 0.0, d_mo = 0.0;
      for (int s = 0; s < kFsimScales; ++s) {
        double e = st.e[o][s][i], ov = st.o_part[o][s][i];
        double u = e * mo - ov * me;
        double sg = (u > 0.0) - (u < 0.0);
        energy += e * me + ov * mo - std::fabs(u);
        d_me += e + sg * ov;
        d_mo += ov - sg * e;
      }
      double ga = sa[i] + kFsimEps;
      double relu = energy > 0.0 ? 1.0 : 0.0;
      double g_energy = gpc[i] * relu / ga;
      double g_sa = -gpc[i] * std::max(energy, 0.0) / (ga * ga);
      double g_se = 0.0, g_so = 0.0;
      if (rho > kTiny) {
        double inv_x = 1.0 / xe;
        double dme_dse = inv_x - se[i] * se[i] / (rho * xe * xe);
        double dme_dso = -se[i] * so[i] / (rho * xe * xe);
        double dmo_dso = inv_x - so[i] * so[i] / (rho * xe * xe);
        double dmo_dse = dme_dso;
        g_se = g_energy * (d_me * dme_dse + d_mo * dmo_dse);
        g_so = g_energy * (d_me * dme_dso + d_mo * dmo_dso);
      }
      for (int s = 0; s < kFsimScales; ++s) {
        double e = st.e[o][s][i], ov = st.o_part[o][s][i];
        double u = e * mo - ov * me;
        double sg = (u > 0.0) - (u < 0.0);
        double ge_i = g_energy * (me - sg * mo) + g_se;
        double go_i = g_energy * (mo + sg * me) + g_so;
        double amp = st.an[o][s][i];
        if (amp > kTiny) {
          ge_i += g_sa * e / amp;
          go_i += g_sa * ov / amp;
        }
        ge[s][i] = ge_i;
        go[s][i] = go_i;
      }
    }
    for (int s = 0; s < kFsimScales; ++s) {
      for (size_t i = 0; i < n; ++i) work[i] = Cpx(ge[s][i], go[s][i]);
      fft::Fft2(work.data(), h, w, work.data());
      const Vec& fil = bank.at(s, o);
      for (size_t i = 0; i < n; ++i) acc_spec[i] += work[i] * fil[i];
    }
  }
  fft::Ifft2(acc_spec.data(), h, w, acc_spec.data());
  for (size_t i = 0; i < n; ++i) glum[i] += acc_spec[i].real();
}

const double kLumaW[3] = {0.299, 0.587, 0.114};

MetricScore FsimMetric(const Tensor& ref, const Tensor& test, Tensor* grad) {
  int h = ref.h(), w = ref.w();
  size_t n = static_cast<size_t>(h) * w;
  Vec y1(n), y2(n);
  for (size_t i = 0; i < n; ++i) {
    y1[i] = kLumaW[0] * ref.Plane(0)[i] + kLumaW[1] * ref.Plane(1)[i] +
            kLumaW[2] * ref.Plane(2)[i];
    y2[i] = kLumaW[0] * test.Plane(0)[i] + kLumaW[1] * test.Plane(1)[i] +
            kLumaW[2] * test.Plane(2)[i];
  }
  PcState st1, st2;
  ComputePc(y1, h, w, false, st1);
  ComputePc(y2, h, w, grad != nullptr, st2);
  Vec g1x, g1y, g1, g2x, g2y, g2;
  GradMag(y1, h, w, kScharrX, kScharrY, g1x, g1y, g1);
  GradMag(y2, h, w, kScharrX, kScharrY, g2x, g2y, g2);

  double num = 0.0, den = 0.0;
  Vec spc(n), sg(n);
  for (size_t i = 0; i < n; ++i) {
    // Fusion-proof 2ab keeps both maps at exactly 1 on identical inputs.
    double pp = st1.pc[i] * st1.pc[i] + st2.pc[i] * st2.pc[i];
    double pd = st1.pc[i] - st2.pc[i];
    spc[i] = (pp - pd * pd + kFsimT1) / (pp + kFsimT1);
    double gg = g1[i] * g1[i] + g2[i] * g2[i];
    double gd = g1[i] - g2[i];
    sg[i] = (gg - gd * gd + kFsimT2) / (gg + kFsimT2);
    double pcm = std::max(st1.pc[i], st2.pc[i]);
    num += spc[i] * sg[i] * pcm;
    den += pcm;
  }
  MetricScore score;
  if (den < 1e-12) {
    // Featureless pair: no congruency anywhere on either side.
    score.raw = 1.0;
    score.distance = 0.0;
    if (grad) {
      *grad = Tensor(3, h, w);
    }
    return score;
  }
  double raw = num / den;
  if (grad) {
    *grad = Tensor(3, h, w);
    // d(distance)/d(raw) = -1; chain through the pooled ratio.
    Vec gpc(n, 0.0), glum(n, 0.0), dgx(n, 0.0), dgy(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      double pcm = std::max(st1.pc[i], st2.pc[i]);
      double g_s = -pcm / den;  // d over combined similarity product
      double g_pcm = -(spc[i] * sg[i] - raw) / den;
      double b1 = st1.pc[i] * st1.pc[i] + st2.pc[i] * st2.pc[i] + kFsimT1;
      double dspc = 2.0 * (st1.pc[i] - spc[i] * st2.pc[i]) / b1;
      double b2 = g1[i] * g1[i] + g2[i] * g2[i] + kFsimT2;
      double dsg = 2.0 * (g1[i] - sg[i] * g2[i]) / b2;
      gpc[i] = g_s * sg[i] * dspc +
               (st2.pc[i] > st1.pc[i] ? g_pcm : 0.0);
      double gg2 = g_s * spc[i] * dsg;
      double denom = std::max(g2[i], kTiny);
      dgx[i] = gg2 * g2x[i] / denom;
      dgy[i] = gg2 * g2y[i] / denom;
    }
    Corr3x3SameZeroAdjointAdd(dgx, h, w, kScharrX, glum);
    Corr3x3SameZeroAdjointAdd(dgy, h, w, kScharrY, glum);
    PcBackwardAdd(st2, gpc, h, w, glum);
    for (int c = 0; c < 3; ++c) {
      float* gp = grad->Plane(c);
      for (size_t i = 0; i < n; ++i) {
        gp[i] = static_cast<float>(kLumaW[c] * glum[i]);
      }
    }
  }
  score.raw = raw;
  double d = 1.0 - raw;
  if (d < 0.0 || d > 1.0) {
    score.distance = std::clamp(d, 0.0, 1.0);
    if (grad) grad->Fill(0.0f);
  } else {
    score.distance = d;
  }
  return score;
}

// ---------------------------------------------------------------------
// Deep structure/texture similarity over a fixed random-feature conv
// pyramid. The backbone is regenerated bit-identically from the seed
// pinned in manifest.json, so scores are reproducible without shipping
// binary weights.

constexpr uint64_t kDistsSeed = 90210;
constexpr uint32_t kDistsBlobVersion = 1;
constexpr const char* kDistsFileName = "dists_backbone_v1.bin";
constexpr int kDistsStages[3][2] = {{3, 16}, {16, 32}, {32, 64}};
constexpr float kDistsSlope = 0.2f;

struct DistsBackbone {
  std::vector<float> w[3], b[3];
};

std::vector<float> HeConv(Pcg32& rng, int cin, int cout) {
  std::vector<float> w(static_cast<size_t>(cout) * cin * 9);
  float std_dev = std::sqrt(2.0f / (static_cast<float>(cin) * 9.0f));
  for (auto& v : w) v = std_dev * static_cast<float>(rng.Normal());
  return w;
}

DistsBackbone MakeBackbone() {
  DistsBackbone bb;
  Pcg32 rng(kDistsSeed);
  for (int s = 0; s < 3; ++s) {
    bb.w[s] = HeConv(rng, kDistsStages[s][0], kDistsStages[s][1]);
    bb.b[s].assign(kDistsStages[s][1], 0.0f);
  }
  return bb;
}

const DistsBackbone& BackboneFor(const std::string& path) {
  static std::mutex mu;
  static std::map<std::string, DistsBackbone> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(path);
  if (it != cache.end()) return it->second;
  namespace fs = std::filesystem;
  if (!fs::exists(path)) {
    WriteDistsBackbone(path);
    std::fprintf(stderr, "note: generated deep-metric backbone at %s\n",
                 path.c_str());
  }
  auto blobs = nn::LoadBlobs(path, kDistsBlobVersion);
  DistsBackbone bb;
  for (int s = 0; s < 3; ++s) {
    std::string base = "dists.conv" + std::to_string(s + 1);
    auto wi = blobs.find(base + ".w");
    auto bi = blobs.find(base + ".b");
    if (wi == blobs.end() || bi == blobs.end()) {
      throw DataError("backbone file " + path + " is missing " + base);
    }
    size_t wn = static_cast<size_t>(kDistsStages[s][1]) * kDistsStages[s][0] * 9;
    if (wi->second.size() != wn ||
        bi->second.size() != static_cast<size_t>(kDistsStages[s][1])) {
      throw DataError("backbone blob " + base + " has the wrong size");
    }
    bb.w[s] = wi->second;
    bb.b[s] = bi->second;
  }
  return cache.emplace(path, std::move(bb)).first->second;
}

struct DistsActivations {
  // Stage feature maps (f0 = input) plus pre-activation conv outputs.
  Tensor f[4];
  Tensor pre[3];
  Tensor pooled[2];
  int hs[4], ws[4];
};

void DistsForward(const DistsBackbone& bb, const Tensor& img,
                  DistsActivations& act) {
  act.f[0] = img;
  act.hs[0] = img.h();
  act.ws[0] = img.w();
  Tensor cur = img;
  for (int s = 0; s < 3; ++s) {
    int cin = kDistsStages[s][0], cout = kDistsStages[s][1];
    int h = cur.h(), w = cur.w();
    Tensor pre(cout, h, w);
    kern::Conv3x3Forward(cur.data(), cin, h, w, bb.w[s].data(),
                         bb.b[s].data(), cout, 1, kern::PadMode::kReflect,
                         pre.data());
    Tensor f(cout, h, w);
    kern::LeakyRelu(pre.data(), pre.size(), kDistsSlope, f.data());
    act.pre[s] = std::move(pre);
    act.f[s + 1] = f;
    act.hs[s + 1] = h;
    act.ws[s + 1] = w;
    if (s < 2) {
      Tensor pooled(cout, h / 2, w / 2);
      for (int c = 0; c < cout; ++c) {
        kern::AvgPool2x2(f.Plane(c), h, w, pooled.Plane(c));
      }
      act.pooled[s] = pooled;
      cur = std::move(pooled);
    }
  }
}

int TotalDistsChannels() { return 3 + 16 + 32 + 64; }

MetricScore DistsMetric(const Tensor& ref, const Tensor& test, Tensor* grad) {
  const DistsBackbone& bb = BackboneFor(DistsWeightsPath());
  DistsActivations ax, ay;
  DistsForward(bb, ref, ax);
  DistsForward(bb, test, ay);

  double weight = 1.0 / (2.0 * TotalDistsChannels());
  // Summing tex+str (exactly 2.0 per channel on identical inputs) and
  // dividing once keeps distance(x, x) at exactly zero.
  double acc = 0.0;
  Tensor stage_grad[4];
  for (int s = 0; s < 4; ++s) {
    const Tensor& fx = ax.f[s];
    const Tensor& fy = ay.f[s];
    size_t n = static_cast<size_t>(fx.h()) * fx.w();
    double nn = static_cast<double>(n);
    if (grad) stage_grad[s] = Tensor(fx.c(), fx.h(), fx.w());
    for (int c = 0; c < fx.c(); ++c) {
      const float* xp = fx.Plane(c);
      const float* yp = fy.Plane(c);
      double mx = kern::Sum(xp, n) / nn;
      double my = kern::Sum(yp, n) / nn;
      double sxx = kern::Dot(xp, xp, n) / nn - mx * mx;
      double syy = kern::Dot(yp, yp, n) / nn - my * my;
      double sxy = kern::Dot(xp, yp, n) / nn - mx * my;
      // Fusion-proof 2ab: exactly 1 when the feature stats coincide.
      double mm = mx * mx + my * my;
      double md = mx - my;
      double bt = mm + kDistsC1;
      double tex = (mm - md * md + kDistsC1) / bt;
      double bs = sxx + syy + kDistsC2;
      double str = (2.0 * sxy + kDistsC2) / bs;
      acc += tex + str;
      if (grad) {
        // d(distance)/d(raw) = -1 folded in here.
        double dtex_dmy = 2.0 * (mx - tex * my) / bt;
        double dstr_dsxy = 2.0 / bs;
        double dstr_dsyy = -str / bs;
        double ca = -weight * (dtex_dmy / nn);
        double cb = -weight * dstr_dsxy / nn;
        double cc = -weight * 2.0 * dstr_dsyy / nn;
        double c0 = ca - cb * mx - cc * my;
        float* gp = stage_grad[s].Plane(c);
        for (size_t i = 0; i < n; ++i) {
          gp[i] = static_cast<float>(c0 + cb * xp[i] + cc * yp[i]);
        }
      }
    }
  }

  MetricScore score;
  score.raw = acc / (2.0 * TotalDistsChannels());
  double d = 1.0 - score.raw;
  bool clamped = d < 0.0 || d > 1.0;
  score.distance = std::clamp(d, 0.0, 1.0);

  if (grad) {
    *grad = Tensor(3, ref.h(), ref.w());
    if (!clamped) {
      Tensor g = stage_grad[3];
      for (int s = 2; s >= 0; --s) {
        int cin = kDistsStages[s][0], cout = kDistsStages[s][1];
        int h = ay.hs[s + 1], w = ay.ws[s + 1];
        Tensor ga(cout, h, w);
        kern::LeakyReluGrad(ay.pre[s].data(), g.data(), g.size(), kDistsSlope,
                            ga.data());
        Tensor gin(cin, h, w);
        kern::Conv3x3BackwardInput(ga.data(), cout, h, w, bb.w[s].data(), cin,
                                   1, kern::PadMode::kReflect, gin.data());
        if (s > 0) {
          // gin sits on the pooled tensor; route through the pool and add
          // the stage term of the unpooled features.
          int ph = ay.hs[s], pw = ay.ws[s];
          Tensor up(cin, ph, pw);
          for (int c = 0; c < cin; ++c) {
            kern::AvgPool2x2Adjoint(gin.Plane(c), ph, pw, up.Plane(c));
          }
          g = stage_grad[s];
          for (size_t i = 0; i < g.size(); ++i) g.data()[i] += up.data()[i];
        } else {
          g = stage_grad[0];
          for (size_t i = 0; i < g.size(); ++i) g.data()[i] += gin.data()[i];
        }
      }
      *grad = g;
    }
  }
  return score;
}

// ---------------------------------------------------------------------
// Registry.

std::mutex& RegistryMutex() {
  static std::mutex mu;
  return mu;
}

std::map<std::string, PluginMetricFn>& PluginsLocked() {
  static std::map<std::string, PluginMetricFn> plugins;
  return plugins;
}

bool IsBuiltinName(const std::string& name) {
  for (const char* b : kBuiltinNames) {
    if (name == b) return true;
  }
  return false;
}

Tensor ProbeImage() {
  Tensor t(3, 16, 16);
  Pcg32 rng(7177);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        t.At(c, y, x) = static_cast<float>(
            0.15 + 0.7 * (0.5 + 0.5 * std::sin(0.9 * x + 0.7 * y + c)) *
                       rng.Uniform());
      }
    }
  }
  return t;
}

}  // namespace

const char* MetricName(MetricId m) {
  return kBuiltinNames[static_cast<int>(m)];
}

MetricId MetricFromName(const std::string& name) {
  for (int i = 0; i < 5; ++i) {
    if (name == kBuiltinNames[i]) return static_cast<MetricId>(i);
  }
  if (name.size() == 2 && name[0] == 'm' && name[1] >= '1' && name[1] <= '5') {
    return static_cast<MetricId>(name[1] - '1');
  }
  throw RegistryError("unknown metric name: " + name);
}

MetricScore EvaluateMetric(MetricId m, const Tensor& ref, const Tensor& test,
                           Tensor* grad) {
  ValidateInputs(m, ref, test);
  switch (m) {
    case MetricId::kMsSsim:
      return MsSsimMetric(ref, test, 5, grad);
    case MetricId::kSsim:
      return SsimMetric(ref, test, grad);
    case MetricId::kDists:
      return DistsMetric(ref, test, grad);
    case MetricId::kGmsd:
      return GmsdMetric(ref, test, grad);
    case MetricId::kFsim:
      return FsimMetric(ref, test, grad);
  }
  throw ParameterError("invalid metric id");
}

MetricScore EvaluateMsSsim(const Tensor& ref, const Tensor& test,
                           int max_scales, Tensor* grad) {
  if (max_scales < 1 || max_scales > 5) {
    throw ParameterError("ms_ssim scale cap must lie in [1, 5], got " +
                         std::to_string(max_scales));
  }
  ValidateInputs(MetricId::kMsSsim, ref, test);
  return MsSsimMetric(ref, test, max_scales, grad);
}

bool MetricDifferentiable(MetricId) { return true; }

bool MetricDifferentiable(const std::string& name) {
  if (IsBuiltinName(name)) return true;
  std::lock_guard<std::mutex> lock(RegistryMutex());
  if (PluginsLocked().count(name)) return false;
  throw RegistryError("unknown metric name: " + name);
}

void RegisterPluginMetric(const std::string& name, PluginMetricFn fn) {
  if (name.empty()) throw RegistryError("plugin metric name must not be empty");
  if (!fn) throw RegistryError("plugin metric callable must not be empty");
  if (IsBuiltinName(name)) {
    throw RegistryError("plugin metric name collides with built-in: " + name);
  }
  {
    std::lock_guard<std::mutex> lock(RegistryMutex());
    if (PluginsLocked().count(name)) {
      throw RegistryError("plugin metric already registered: " + name);
    }
  }
  // Contract probe outside the lock: identical inputs must score 0.
  Tensor probe = ProbeImage();
  double d = fn(probe, probe);
  if (!(std::fabs(d) <= 1e-9)) {
    throw RegistryError("plugin metric " + name +
                        " reports nonzero distance on identical images");
  }
  std::lock_guard<std::mutex> lock(RegistryMutex());
  if (!PluginsLocked().emplace(name, std::move(fn)).second) {
    throw RegistryError("plugin metric already registered: " + name);
  }
}

std::vector<std::string> RegisteredMetricNames() {
  std::vector<std::string> names(kBuiltinNames, kBuiltinNames + 5);
  std::lock_guard<std::mutex> lock(RegistryMutex());
  for (const auto& [name, fn] : PluginsLocked()) names.push_back(name);
  return names;
}

MetricScore EvaluateMetricByName(const std::string& name, const Tensor& ref,
                                 const Tensor& test) {
  if (IsBuiltinName(name)) {
    return EvaluateMetric(MetricFromName(name), ref, test);
  }
  PluginMetricFn fn;
  {
    std::lock_guard<std::mutex> lock(RegistryMutex());
    auto it = PluginsLocked().find(name);
    if (it == PluginsLocked().end()) {
      throw RegistryError("unknown metric name: " + name);
    }
    fn = it->second;
  }
  RequireSameShape(ref, test, "metric inputs");
  double d = fn(ref, test);
  return MetricScore{d, d};
}

std::string DistsWeightsPath() {
  const char* env = std::getenv("RGBJND_WEIGHTS_DIR");
  std::string dir = (env && *env) ? env : "weights";
  return dir + "/" + kDistsFileName;
}

void WriteDistsBackbone(const std::string& path) {
  namespace fs = std::filesystem;
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  DistsBackbone bb = MakeBackbone();
  std::vector<std::pair<std::string, const std::vector<float>*>> blobs;
  std::string names[3];
  for (int s = 0; s < 3; ++s) {
    names[s] = "dists.conv" + std::to_string(s + 1);
    blobs.emplace_back(names[s] + ".w", &bb.w[s]);
    blobs.emplace_back(names[s] + ".b", &bb.b[s]);
  }
  nn::SaveBlobs(path, kDistsBlobVersion, blobs);
}

}  // namespace iqa
}  // namespace rgbjnd
