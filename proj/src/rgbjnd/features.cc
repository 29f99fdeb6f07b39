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

#include "rgbjnd/features.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <mutex>
#include <vector>

#include "rgbjnd/core.h"
#include "rgbjnd/fft.h"
#include "rgbjnd/io.h"
#include "rgbjnd/kernels.h"

namespace rgbjnd {

namespace {

constexpr double kPi = 3.14159265358979323846;

void ForwardDiff(const Tensor& o, Tensor& g1, Tensor& g2) {
  int h = o.h(), w = o.w();
  for (int c = 0; c < 3; ++c) {
    const float* p = o.Plane(c);
    float* v = g1.Plane(c);
    float* hz = g2.Plane(c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        size_t i = static_cast<size_t>(y) * w + x;
        // Replicate padding beyond the last row/column makes the
        // boundary difference zero.
        v[i] = (y + 1 < h) ? p[i + w] - p[i] : 0.0f;
        hz[i] = (x + 1 < w) ? p[i + 1] - p[i] : 0.0f;
      }
    }
  }
}

void SobelDiff(const Tensor& o, Tensor& g1, Tensor& g2) {
  int h = o.h(), w = o.w();
  auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
  for (int c = 0; c < 3; ++c) {
    const float* p = o.Plane(c);
    float* v = g1.Plane(c);
    float* hz = g2.Plane(c);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float s[3][3];
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            s[dy + 1][dx + 1] =
                p[static_cast<size_t>(clampi(y + dy, h)) * w +
                  clampi(x + dx, w)];
          }
        }
        size_t i = static_cast<size_t>(y) * w + x;
        v[i] = (s[2][0] + 2.0f * s[2][1] + s[2][2]) -
               (s[0][0] + 2.0f * s[0][1] + s[0][2]);
        hz[i] = (s[0][2] + 2.0f * s[1][2] + s[2][2]) -
                (s[0][0] + 2.0f * s[1][0] + s[2][0]);
      }
    }
  }
}

}  // namespace

GradientField ComputeGradientField(const Tensor& o, GradientOp op) {
  ValidateImageShape(o, "gradient_field");
  GradientField f;
  f.g1 = Tensor(3, o.h(), o.w());
  f.g2 = Tensor(3, o.h(), o.w());
  if (op == GradientOp::kForwardDiff) {
    ForwardDiff(o, f.g1, f.g2);
  } else {
    SobelDiff(o, f.g1, f.g2);
  }
  std::vector<float> mag(o.size());
  const float* a = f.g1.data();
  const float* b = f.g2.data();
  for (size_t i = 0; i < mag.size(); ++i) {
    mag[i] = std::sqrt(a[i] * a[i] + b[i] * b[i]);
  }
  f.magnitude_sum = kern::Sum(mag.data(), mag.size());
  return f;
}

Tensor PatternComplexity(const Tensor& o, int window) {
  ValidateImageShape(o, "pattern_complexity");
  if (window < 3 || window % 2 == 0) {
    throw ParameterError("pattern_complexity: window must be odd and >= 3, got " +
                         std::to_string(window));
  }
  if (window > o.h() || window > o.w()) {
    throw ParameterError("pattern_complexity: window " +
                         std::to_string(window) + " exceeds image " +
                         o.ShapeStr());
  }
  int h = o.h(), w = o.w();
  // Channel-mean luminance, central differences with replicate borders.
  std::vector<float> gray(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      size_t i = static_cast<size_t>(y) * w + x;
      gray[i] = (o.data()[i] + o.Plane(1)[i] + o.Plane(2)[i]) / 3.0f;
    }
  }
  // Per-pixel orientation bin as a one-hot bitmask; 0 where the gradient
  // magnitude is below threshold.
  std::vector<uint16_t> bins(gray.size(), 0);
  for (int y = 0; y < h; ++y) {
    int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
    for (int x = 0; x < w; ++x) {
      int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
      float gy = 0.5f * (gray[static_cast<size_t>(yp) * w + x] -
                         gray[static_cast<size_t>(ym) * w + x]);
      float gx = 0.5f * (gray[static_cast<size_t>(y) * w + xp] -
                         gray[static_cast<size_t>(y) * w + xm]);
      float m = std::sqrt(gx * gx + gy * gy);
      if (m <= kOrientationMagThreshold) continue;
      double theta = std::atan2(gy, gx);  // (-pi, pi]
      if (theta < 0.0) theta += 2.0 * kPi;
      int bin = static_cast<int>(theta / (2.0 * kPi / kOrientationBins));
      bin = std::min(bin, kOrientationBins - 1);
      bins[static_cast<size_t>(y) * w + x] = static_cast<uint16_t>(1u << bin);
    }
  }
  Tensor out(1, h, w);
  int r = window / 2;
  for (int y = 0; y < h; ++y) {
    int y0 = std::max(y - r, 0), y1 = std::min(y + r, h - 1);
    for (int x = 0; x < w; ++x) {
      int x0 = std::max(x - r, 0), x1 = std::min(x + r, w - 1);
      uint16_t occupied = 0;
      for (int yy = y0; yy <= y1; ++yy) {
        for (int xx = x0; xx <= x1; ++xx) {
          occupied |= bins[static_cast<size_t>(yy) * w + xx];
        }
      }
      out.At(0, y, x) =
          static_cast<float>(std::popcount(occupied)) / kOrientationBins;
    }
  }
  return out;
}

namespace {

// Saliency registry. Built-ins are installed on first use; the map is
// never mutated after that except by explicit registration.
std::mutex g_saliency_mutex;

std::map<std::string, SaliencyProvider>& SaliencyMapLocked() {
  static std::map<std::string, SaliencyProvider> providers = {
      {"spectral_residual", SpectralResidualSaliency},
  };
  return providers;
}

constexpr int kSaliencyGrid = 64;
constexpr int kSaliencyPad = 16;

void MaxNormalize(Tensor& m) {
  float mx = 0.0f;
  for (size_t i = 0; i < m.size(); ++i) mx = std::max(mx, m.data()[i]);
  if (mx <= 0.0f) {
    m.Fill(0.0f);
    return;
  }
  for (size_t i = 0; i < m.size(); ++i) {
    m.data()[i] = std::clamp(m.data()[i] / mx, 0.0f, 1.0f);
  }
}

Tensor FileSaliency(const std::string& path, const Tensor& o) {
  Tensor raw;
  std::string ext;
  size_t dot = path.find_last_of('.');
  if (dot != std::string::npos) ext = path.substr(dot + 1);
  if (ext == "png") {
    raw = LoadGray16Png(path);
  } else {
    raw = LoadRawFloat(path);
    if (raw.c() != 1) {
      throw DataError("saliency file must be single-channel: '" + path + "'");
    }
  }
  Tensor out(1, o.h(), o.w());
  if (raw.h() != o.h() || raw.w() != o.w()) {
    std::fprintf(stderr,
                 "[features] warning: saliency map '%s' is %dx%d, resampling "
                 "to %dx%d\n",
                 path.c_str(), raw.h(), raw.w(), o.h(), o.w());
    kern::ResizeBilinear(raw.data(), raw.h(), raw.w(), o.h(), o.w(),
                         out.data());
  } else {
    out = raw;
  }
  for (size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::max(out.data()[i], 0.0f);
  }
  MaxNormalize(out);
  return out;
}

}  // namespace

void RegisterSaliencyProvider(const std::string& name, SaliencyProvider fn) {
  std::lock_guard<std::mutex> lock(g_saliency_mutex);
  auto& m = SaliencyMapLocked();
  if (m.count(name) != 0) {
    throw RegistryError("saliency provider '" + name + "' already registered");
  }
  if (name.rfind("file:", 0) == 0) {
    throw RegistryError("the 'file:' prefix is reserved");
  }
  m[name] = std::move(fn);
}

std::vector<std::string> SaliencyProviderNames() {
  std::lock_guard<std::mutex> lock(g_saliency_mutex);
  std::vector<std::string> names;
  for (const auto& [k, v] : SaliencyMapLocked()) names.push_back(k);
  return names;
}

Tensor VisualAttention(const Tensor& o, const std::string& provider) {
  ValidateImageShape(o, "visual_attention");
  if (provider.rfind("file:", 0) == 0) {
    return FileSaliency(provider.substr(5), o);
  }
  SaliencyProvider fn;
  {
    std::lock_guard<std::mutex> lock(g_saliency_mutex);
    auto& m = SaliencyMapLocked();
    auto it = m.find(provider);
    if (it == m.end()) {
      throw RegistryError("unknown saliency provider '" + provider + "'");
    }
    fn = it->second;
  }
  Tensor out = fn(o);
  if (out.c() != 1 || out.h() != o.h() || out.w() != o.w()) {
    throw RegistryError("saliency provider '" + provider +
                        "' returned wrong shape " + out.ShapeStr());
  }
  // The [0,1] max-normalized contract holds no matter what the provider
  // returned.
  for (size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::max(out.data()[i], 0.0f);
  }
  MaxNormalize(out);
  return out;
}

Tensor SpectralResidualSaliency(const Tensor& o) {
  int h = o.h(), w = o.w();
  size_t plane = static_cast<size_t>(h) * w;
  std::vector<float> gray(plane);
  float mn = 1e30f, mx = -1e30f;
  for (size_t i = 0; i < plane; ++i) {
    gray[i] = (o.data()[i] + o.Plane(1)[i] + o.Plane(2)[i]) / 3.0f;
    mn = std::min(mn, gray[i]);
    mx = std::max(mx, gray[i]);
  }
  Tensor out(1, h, w);
  // Constant luminance has no spectral structure; the contract maps it to
  // the all-zero attention map rather than amplifying noise.
  if (mx - mn < 1e-12f) {
    return out;
  }

  // Working grid: long side shrunk to kSaliencyGrid (never enlarged,
  // aspect kept), then replicate-padded so the reconstruction's
  // wrap-around ringing lands outside the crop window.
  const int pad = kSaliencyPad;
  double scale =
      std::min(1.0, static_cast<double>(kSaliencyGrid) / std::max(h, w));
  int gh = std::max(8, static_cast<int>(std::lround(h * scale)));
  int gw = std::max(8, static_cast<int>(std::lround(w * scale)));
  int fh = gh + 2 * pad, fw = gw + 2 * pad;

  std::vector<float> small(static_cast<size_t>(gh) * gw);
  if (gh == h && gw == w) {
    std::copy(gray.begin(), gray.end(), small.begin());
  } else {
    kern::ResizeBilinear(gray.data(), h, w, gh, gw, small.data());
  }
  std::vector<std::complex<double>> freq(static_cast<size_t>(fh) * fw);
  double mean = 0.0;
  for (int y = 0; y < fh; ++y) {
    for (int x = 0; x < fw; ++x) {
      int sy = std::clamp(y - pad, 0, gh - 1);
      int sx = std::clamp(x - pad, 0, gw - 1);
      double v = small[static_cast<size_t>(sy) * gw + sx];
      freq[static_cast<size_t>(y) * fw + x] = v;
      mean += v;
    }
  }
  mean /= static_cast<double>(freq.size());
  for (auto& v : freq) v -= mean;
  fft::Fft2(freq.data(), fh, fw, freq.data());

  std::vector<double> log_amp(freq.size()), phase(freq.size());
  for (size_t i = 0; i < freq.size(); ++i) {
    log_amp[i] = std::log(std::abs(freq[i]) + 1e-12);
    phase[i] = std::arg(freq[i]);
  }
  // Mean removal drives the DC bin to an artificial -inf outlier that
  // would bleed into its neighbours through the smoothing below; pin it
  // to the neighbourhood level instead.
  {
    double acc = 0.0;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dy == 0 && dx == 0) continue;
        acc += log_amp[static_cast<size_t>((dy + fh) % fh) * fw +
                       (dx + fw) % fw];
      }
    }
    log_amp[0] = acc / 8.0;
  }
  // Residual: log-amplitude minus its 3x3 local mean. The smoothing must
  // wrap (the spectrum is periodic in k); clamping here would break the
  // Hermitian symmetry and leak energy into the imaginary part of s.
  std::vector<double> smooth(log_amp.size());
  for (int y = 0; y < fh; ++y) {
    for (int x = 0; x < fw; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        int sy = (y + dy + fh) % fh;
        for (int dx = -1; dx <= 1; ++dx) {
          int sx = (x + dx + fw) % fw;
          acc += log_amp[static_cast<size_t>(sy) * fw + sx];
        }
      }
      smooth[static_cast<size_t>(y) * fw + x] = acc / 9.0;
    }
  }
  // Whitening is scale-free, so near-Nyquist junk from the downsample
  // would be amplified to signal parity and, once squared, demodulate to
  // a low-frequency ghost. A raised-cosine rolloff over the top octave
  // keeps only bands the working grid represents faithfully.
  for (int y = 0; y < fh; ++y) {
    int ky = y <= fh / 2 ? y : y - fh;
    double ry = std::abs(ky) / (fh / 2.0);
    for (int x = 0; x < fw; ++x) {
      int kx = x <= fw / 2 ? x : x - fw;
      double rx = std::abs(kx) / (fw / 2.0);
      double rho = std::sqrt(rx * rx + ry * ry);
      double roll = rho <= 0.5 ? 1.0
                    : rho >= 1.0
                        ? 0.0
                        : 0.5 * (1.0 + std::cos(kPi * (rho - 0.5) / 0.5));
      size_t i = static_cast<size_t>(y) * fw + x;
      freq[i] = std::polar(std::exp(log_amp[i] - smooth[i]) * roll, phase[i]);
    }
  }
  freq[0] = 0.0;
  fft::Ifft2(freq.data(), fh, fw, freq.data());
  std::vector<float> sal(freq.size());
  for (size_t i = 0; i < sal.size(); ++i) {
    double re = freq[i].real();  // imaginary part is zero by symmetry
    sal[i] = static_cast<float>(re * re);
  }
  // Gaussian post-smoothing, sigma 2.5.
  constexpr int kTaps = 11;
  float taps[kTaps];
  float tsum = 0.0f;
  for (int i = 0; i < kTaps; ++i) {
    float d = static_cast<float>(i - kTaps / 2);
    taps[i] = std::exp(-d * d / (2.0f * 2.5f * 2.5f));
    tsum += taps[i];
  }
  for (auto& t : taps) t /= tsum;
  std::vector<float> blurred(sal.size());
  kern::SeparableCorrelateReplicate(sal.data(), fh, fw, taps, kTaps,
                                    blurred.data());

  std::vector<float> cropped(static_cast<size_t>(gh) * gw);
  for (int y = 0; y < gh; ++y) {
    for (int x = 0; x < gw; ++x) {
      cropped[static_cast<size_t>(y) * gw + x] =
          blurred[static_cast<size_t>(y + pad) * fw + (x + pad)];
    }
  }
  if (gh == h && gw == w) {
    std::copy(cropped.begin(), cropped.end(), out.data());
  } else {
    kern::ResizeBilinear(cropped.data(), gh, gw, h, w, out.data());
  }
  for (size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::max(out.data()[i], 0.0f);
  }
  MaxNormalize(out);
  return out;
}

}  // namespace rgbjnd
