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

// Reference backend. Plain loops, no explicit SIMD, no threading. Parity
// tests compare the parallel backend against these implementations, so
// favor obviousness over speed here.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "rgbjnd/kernels.h"

namespace rgbjnd {
namespace kern {
namespace serial {

void Gemm(int m, int n, int k, const float* a, const float* b, float* c,
          bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += static_cast<double>(a[i * k + p]) * b[p * n + j];
      }
      float* out = &c[static_cast<size_t>(i) * n + j];
      *out = accumulate ? *out + static_cast<float>(acc)
                        : static_cast<float>(acc);
    }
  }
}

void GemmNT(int m, int n, int k, const float* a, const float* b, float* c,
            bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += static_cast<double>(a[i * k + p]) * b[j * k + p];
      }
      float* out = &c[static_cast<size_t>(i) * n + j];
      *out = accumulate ? *out + static_cast<float>(acc)
                        : static_cast<float>(acc);
    }
  }
}

void GemmTN(int m, int n, int k, const float* a, const float* b, float* c,
            bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p) {
        acc += static_cast<double>(a[p * m + i]) * b[p * n + j];
      }
      float* out = &c[static_cast<size_t>(i) * n + j];
      *out = accumulate ? *out + static_cast<float>(acc)
                        : static_cast<float>(acc);
    }
  }
}

// Chunked reductions. The chunk schedule is part of the kernel contract:
// the parallel backend reproduces it exactly.

double Sum(const float* x, size_t n) {
  double total = 0.0;
  for (size_t c0 = 0; c0 < n; c0 += kReduceChunk) {
    size_t c1 = std::min(n, c0 + kReduceChunk);
    double part = 0.0;
    for (size_t i = c0; i < c1; ++i) part += x[i];
    total += part;
  }
  return total;
}

double SumAbs(const float* x, size_t n) {
  double total = 0.0;
  for (size_t c0 = 0; c0 < n; c0 += kReduceChunk) {
    size_t c1 = std::min(n, c0 + kReduceChunk);
    double part = 0.0;
    for (size_t i = c0; i < c1; ++i) part += std::fabs(x[i]);
    total += part;
  }
  return total;
}

double Dot(const float* a, const float* b, size_t n) {
  double total = 0.0;
  for (size_t c0 = 0; c0 < n; c0 += kReduceChunk) {
    size_t c1 = std::min(n, c0 + kReduceChunk);
    double part = 0.0;
    for (size_t i = c0; i < c1; ++i) {
      part += static_cast<double>(a[i]) * b[i];
    }
    total += part;
  }
  return total;
}

double SumSqDiff(const float* a, const float* b, size_t n) {
  double total = 0.0;
  for (size_t c0 = 0; c0 < n; c0 += kReduceChunk) {
    size_t c1 = std::min(n, c0 + kReduceChunk);
    double part = 0.0;
    for (size_t i = c0; i < c1; ++i) {
      double d = static_cast<double>(a[i]) - b[i];
      part += d * d;
    }
    total += part;
  }
  return total;
}

void LeakyRelu(const float* x, size_t n, float slope, float* y) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
}

void LeakyReluGrad(const float* x, const float* gy, size_t n, float slope,
                   float* gx) {
  for (size_t i = 0; i < n; ++i) gx[i] = x[i] > 0.0f ? gy[i] : slope * gy[i];
}

void ScaledTanh(const float* x, size_t n, float* y) {
  for (size_t i = 0; i < n; ++i) y[i] = 0.5f * std::tanh(x[i]);
}

void ScaledTanhGrad(const float* y, const float* gy, size_t n, float* gx) {
  for (size_t i = 0; i < n; ++i) gx[i] = gy[i] * (0.5f - 2.0f * y[i] * y[i]);
}

void Axpy(float alpha, const float* x, float* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void Scale(float* x, size_t n, float alpha) {
  for (size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void AdamStep(float* w, const float* g, float* m, float* v, size_t n,
              float lr, float beta1, float beta2, float eps, float inv_bias1,
              float inv_bias2) {
  for (size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    float mhat = m[i] * inv_bias1;
    float vhat = v[i] * inv_bias2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void SeparableCorrelateValid(const float* in, int h, int w, const float* taps,
                             int k, float* out) {
  int ow = w - k + 1;
  int oh = h - k + 1;
  std::vector<float> tmp(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      float acc = 0.0f;
      for (int j = 0; j < k; ++j) acc += taps[j] * in[y * w + x + j];
      tmp[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      float acc = 0.0f;
      for (int i = 0; i < k; ++i) {
        acc += taps[i] * tmp[static_cast<size_t>(y + i) * ow + x];
      }
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
}

void SeparableCorrelateValidAdjoint(const float* gout, int h, int w,
                                    const float* taps, int k, float* gin) {
  int ow = w - k + 1;
  int oh = h - k + 1;
  // Vertical adjoint: (h - k + 1) x ow grid scattered back to h rows.
  std::vector<float> tmp(static_cast<size_t>(h) * ow, 0.0f);
  for (int y = 0; y < h; ++y) {
    for (int i = 0; i < k; ++i) {
      int oy = y - i;
      if (oy < 0 || oy >= oh) continue;
      for (int x = 0; x < ow; ++x) {
        tmp[static_cast<size_t>(y) * ow + x] +=
            taps[i] * gout[static_cast<size_t>(oy) * ow + x];
      }
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int j = 0; j < k; ++j) {
        int ox = x - j;
        if (ox < 0 || ox >= ow) continue;
        acc += taps[j] * tmp[static_cast<size_t>(y) * ow + ox];
      }
      gin[static_cast<size_t>(y) * w + x] = acc;
    }
  }
}

void SeparableCorrelateReplicate(const float* in, int h, int w,
                                 const float* taps, int k, float* out) {
  int r = k / 2;
  std::vector<float> tmp(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int j = 0; j < k; ++j) {
        int sx = std::clamp(x + j - r, 0, w - 1);
        acc += taps[j] * in[y * w + sx];
      }
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = 0; i < k; ++i) {
        int sy = std::clamp(y + i - r, 0, h - 1);
        acc += taps[i] * tmp[static_cast<size_t>(sy) * w + x];
      }
      out[static_cast<size_t>(y) * w + x] = acc;
    }
  }
}

void Correlate3x3Zero(const float* in, int h, int w, const float* k9,
                      float* out) {
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int dy = -1; dy <= 1; ++dy) {
        int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          int sx = x + dx;
          if (sx < 0 || sx >= w) continue;
          acc += k9[(dy + 1) * 3 + dx + 1] * in[sy * w + sx];
        }
      }
      out[static_cast<size_t>(y) * w + x] = acc;
    }
  }
}

void AvgPool2x2(const float* in, int h, int w, float* out) {
  int oh = h / 2, ow = w / 2;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const float* p = in + static_cast<size_t>(2 * y) * w + 2 * x;
      out[static_cast<size_t>(y) * ow + x] =
          0.25f * (p[0] + p[1] + p[w] + p[w + 1]);
    }
  }
}

void AvgPool2x2Adjoint(const float* gout, int h, int w, float* gin) {
  int oh = h / 2, ow = w / 2;
  std::memset(gin, 0, sizeof(float) * h * w);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      float g = 0.25f * gout[static_cast<size_t>(y) * ow + x];
      float* p = gin + static_cast<size_t>(2 * y) * w + 2 * x;
      p[0] += g;
      p[1] += g;
      p[w] += g;
      p[w + 1] += g;
    }
  }
}

void UpsampleNearest2x(const float* in, int h, int w, float* out) {
  int ow = 2 * w;
  for (int y = 0; y < 2 * h; ++y) {
    const float* src = in + static_cast<size_t>(y / 2) * w;
    float* dst = out + static_cast<size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) dst[x] = src[x / 2];
  }
}

void UpsampleNearest2xAdjoint(const float* gout, int h, int w, float* gin) {
  int ow = 2 * w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const float* p = gout + static_cast<size_t>(2 * y) * ow + 2 * x;
      gin[static_cast<size_t>(y) * w + x] = p[0] + p[1] + p[ow] + p[ow + 1];
    }
  }
}

void ResizeBilinear(const float* in, int h, int w, int oh, int ow,
                    float* out) {
  double sy = static_cast<double>(h) / oh;
  double sx = static_cast<double>(w) / ow;
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, h - 1);
    int y1c = std::clamp(y0 + 1, 0, h - 1);
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, w - 1);
      int x1c = std::clamp(x0 + 1, 0, w - 1);
      double top = (1.0 - wx) * in[y0c * w + x0c] + wx * in[y0c * w + x1c];
      double bot = (1.0 - wx) * in[y1c * w + x0c] + wx * in[y1c * w + x1c];
      out[static_cast<size_t>(y) * ow + x] =
          static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
}

namespace {

// Padded coordinate -> source index, or -1 when the tap reads zero padding.
inline int MapPad(int p, int n, PadMode pad) {
  if (p >= 0 && p < n) return p;
  if (pad == PadMode::kZero) return -1;
  return detail::ReflectIndex(p, n);
}

}  // namespace

void Conv3x3Forward(const float* in, int cin, int h, int w,
                    const float* weights, const float* bias, int cout,
                    int stride, PadMode pad, float* out) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias ? bias[co] : 0.0;
        for (int ci = 0; ci < cin; ++ci) {
          const float* plane = in + static_cast<size_t>(ci) * h * w;
          const float* wk = weights + (static_cast<size_t>(co) * cin + ci) * 9;
          for (int ky = 0; ky < 3; ++ky) {
            int py = MapPad(oy * stride + ky - 1, h, pad);
            if (py < 0) continue;
            for (int kx = 0; kx < 3; ++kx) {
              int px = MapPad(ox * stride + kx - 1, w, pad);
              if (px < 0) continue;
              acc += static_cast<double>(wk[ky * 3 + kx]) * plane[py * w + px];
            }
          }
        }
        out[(static_cast<size_t>(co) * oh + oy) * ow + ox] =
            static_cast<float>(acc);
      }
    }
  }
}

void Conv3x3BackwardInput(const float* gout, int cout, int h, int w,
                          const float* weights, int cin, int stride,
                          PadMode pad, float* gin) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  std::memset(gin, 0, sizeof(float) * cin * h * w);
  for (int co = 0; co < cout; ++co) {
    const float* gplane = gout + static_cast<size_t>(co) * oh * ow;
    for (int ci = 0; ci < cin; ++ci) {
      float* dst = gin + static_cast<size_t>(ci) * h * w;
      const float* wk = weights + (static_cast<size_t>(co) * cin + ci) * 9;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          float g = gplane[oy * ow + ox];
          for (int ky = 0; ky < 3; ++ky) {
            int py = MapPad(oy * stride + ky - 1, h, pad);
            if (py < 0) continue;
            for (int kx = 0; kx < 3; ++kx) {
              int px = MapPad(ox * stride + kx - 1, w, pad);
              if (px < 0) continue;
              dst[py * w + px] += wk[ky * 3 + kx] * g;
            }
          }
        }
      }
    }
  }
}

void Conv3x3BackwardParams(const float* in, int cin, int h, int w,
                           const float* gout, int cout, int stride,
                           PadMode pad, float* gweights, float* gbias,
                           bool accumulate) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  if (!accumulate) {
    std::memset(gweights, 0, sizeof(float) * cout * cin * 9);
    if (gbias) std::memset(gbias, 0, sizeof(float) * cout);
  }
  for (int co = 0; co < cout; ++co) {
    const float* gplane = gout + static_cast<size_t>(co) * oh * ow;
    if (gbias) {
      double acc = 0.0;
      for (int i = 0; i < oh * ow; ++i) acc += gplane[i];
      gbias[co] += static_cast<float>(acc);
    }
    for (int ci = 0; ci < cin; ++ci) {
      const float* plane = in + static_cast<size_t>(ci) * h * w;
      float* gw = gweights + (static_cast<size_t>(co) * cin + ci) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          double acc = 0.0;
          for (int oy = 0; oy < oh; ++oy) {
            int py = MapPad(oy * stride + ky - 1, h, pad);
            if (py < 0) continue;
            for (int ox = 0; ox < ow; ++ox) {
              int px = MapPad(ox * stride + kx - 1, w, pad);
              if (px < 0) continue;
              acc += static_cast<double>(plane[py * w + px]) *
                     gplane[oy * ow + ox];
            }
          }
          gw[ky * 3 + kx] += static_cast<float>(acc);
        }
      }
    }
  }
}

void Conv1x1Forward(const float* in, int cin, int h, int w,
                    const float* weights, const float* bias, int cout,
                    int stride, float* out) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  for (int co = 0; co < cout; ++co) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias ? bias[co] : 0.0;
        for (int ci = 0; ci < cin; ++ci) {
          acc += static_cast<double>(weights[co * cin + ci]) *
                 in[(static_cast<size_t>(ci) * h + oy * stride) * w +
                    ox * stride];
        }
        out[(static_cast<size_t>(co) * oh + oy) * ow + ox] =
            static_cast<float>(acc);
      }
    }
  }
}

void Conv1x1BackwardInput(const float* gout, int cout, int h, int w,
                          const float* weights, int cin, int stride,
                          float* gin) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  std::memset(gin, 0, sizeof(float) * cin * h * w);
  for (int ci = 0; ci < cin; ++ci) {
    float* dst = gin + static_cast<size_t>(ci) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int co = 0; co < cout; ++co) {
          acc += static_cast<double>(weights[co * cin + ci]) *
                 gout[(static_cast<size_t>(co) * oh + oy) * ow + ox];
        }
        dst[(oy * stride) * w + ox * stride] = static_cast<float>(acc);
      }
    }
  }
}

void Conv1x1BackwardParams(const float* in, int cin, int h, int w,
                           const float* gout, int cout, int stride,
                           float* gweights, float* gbias, bool accumulate) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  if (!accumulate) {
    std::memset(gweights, 0, sizeof(float) * cout * cin);
    if (gbias) std::memset(gbias, 0, sizeof(float) * cout);
  }
  for (int co = 0; co < cout; ++co) {
    const float* gplane = gout + static_cast<size_t>(co) * oh * ow;
    if (gbias) {
      double acc = 0.0;
      for (int i = 0; i < oh * ow; ++i) acc += gplane[i];
      gbias[co] += static_cast<float>(acc);
    }
    for (int ci = 0; ci < cin; ++ci) {
      const float* plane = in + static_cast<size_t>(ci) * h * w;
      double acc = 0.0;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          acc += static_cast<double>(plane[(oy * stride) * w + ox * stride]) *
                 gplane[oy * ow + ox];
        }
      }
      gweights[co * cin + ci] += static_cast<float>(acc);
    }
  }
}

}  // namespace serial
}  // namespace kern
}  // namespace rgbjnd
