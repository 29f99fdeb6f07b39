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

// Production backend: OpenMP threading plus a register-blocked GEMM
// microkernel (AVX-512, AVX2, or scalar fallback picked at compile time).
// GEMM uses the usual pack-and-block scheme: B panels of kNR columns and
// A panels of kMR rows are repacked so the microkernel streams contiguous
// memory. Convolutions lower onto GEMM through im2col/col2im.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

#include "rgbjnd/kernels.h"

namespace rgbjnd {
namespace kern {
namespace parallel {

namespace {

#if defined(__AVX512F__)

constexpr int kMR = 8;
constexpr int kNR = 48;

// 8 x 48 tile: 24 zmm accumulators, 3 B loads and 8 A broadcasts per k.
void MicroKernel(int kc, const float* ap, const float* bp, float* c, int ldc,
                 bool load_c) {
  __m512 acc[kMR][3];
  for (int m = 0; m < kMR; ++m) {
    if (load_c) {
      acc[m][0] = _mm512_loadu_ps(c + static_cast<size_t>(m) * ldc);
      acc[m][1] = _mm512_loadu_ps(c + static_cast<size_t>(m) * ldc + 16);
      acc[m][2] = _mm512_loadu_ps(c + static_cast<size_t>(m) * ldc + 32);
    } else {
      acc[m][0] = _mm512_setzero_ps();
      acc[m][1] = _mm512_setzero_ps();
      acc[m][2] = _mm512_setzero_ps();
    }
  }
  for (int p = 0; p < kc; ++p) {
    __m512 b0 = _mm512_loadu_ps(bp + static_cast<size_t>(p) * kNR);
    __m512 b1 = _mm512_loadu_ps(bp + static_cast<size_t>(p) * kNR + 16);
    __m512 b2 = _mm512_loadu_ps(bp + static_cast<size_t>(p) * kNR + 32);
    const float* arow = ap + static_cast<size_t>(p) * kMR;
    for (int m = 0; m < kMR; ++m) {
      __m512 av = _mm512_set1_ps(arow[m]);
      acc[m][0] = _mm512_fmadd_ps(av, b0, acc[m][0]);
      acc[m][1] = _mm512_fmadd_ps(av, b1, acc[m][1]);
      acc[m][2] = _mm512_fmadd_ps(av, b2, acc[m][2]);
    }
  }
  for (int m = 0; m < kMR; ++m) {
    _mm512_storeu_ps(c + static_cast<size_t>(m) * ldc, acc[m][0]);
    _mm512_storeu_ps(c + static_cast<size_t>(m) * ldc + 16, acc[m][1]);
    _mm512_storeu_ps(c + static_cast<size_t>(m) * ldc + 32, acc[m][2]);
  }
}

#elif defined(__AVX2__) && defined(__FMA__)

constexpr int kMR = 6;
constexpr int kNR = 16;

void MicroKernel(int kc, const float* ap, const float* bp, float* c, int ldc,
                 bool load_c) {
  __m256 acc[kMR][2];
  for (int m = 0; m < kMR; ++m) {
    if (load_c) {
      acc[m][0] = _mm256_loadu_ps(c + static_cast<size_t>(m) * ldc);
      acc[m][1] = _mm256_loadu_ps(c + static_cast<size_t>(m) * ldc + 8);
    } else {
      acc[m][0] = _mm256_setzero_ps();
      acc[m][1] = _mm256_setzero_ps();
    }
  }
  for (int p = 0; p < kc; ++p) {
    __m256 b0 = _mm256_loadu_ps(bp + static_cast<size_t>(p) * kNR);
    __m256 b1 = _mm256_loadu_ps(bp + static_cast<size_t>(p) * kNR + 8);
    const float* arow = ap + static_cast<size_t>(p) * kMR;
    for (int m = 0; m < kMR; ++m) {
      __m256 av = _mm256_set1_ps(arow[m]);
      acc[m][0] = _mm256_fmadd_ps(av, b0, acc[m][0]);
      acc[m][1] = _mm256_fmadd_ps(av, b1, acc[m][1]);
    }
  }
  for (int m = 0; m < kMR; ++m) {
    _mm256_storeu_ps(c + static_cast<size_t>(m) * ldc, acc[m][0]);
    _mm256_storeu_ps(c + static_cast<size_t>(m) * ldc + 8, acc[m][1]);
  }
}

#else

constexpr int kMR = 4;
constexpr int kNR = 8;

void MicroKernel(int kc, const float* ap, const float* bp, float* c, int ldc,
                 bool load_c) {
  float acc[kMR][kNR];
  for (int m = 0; m < kMR; ++m) {
    for (int j = 0; j < kNR; ++j) {
      acc[m][j] = load_c ? c[static_cast<size_t>(m) * ldc + j] : 0.0f;
    }
  }
  for (int p = 0; p < kc; ++p) {
    const float* brow = bp + static_cast<size_t>(p) * kNR;
    const float* arow = ap + static_cast<size_t>(p) * kMR;
    for (int m = 0; m < kMR; ++m) {
      float av = arow[m];
      for (int j = 0; j < kNR; ++j) acc[m][j] += av * brow[j];
    }
  }
  for (int m = 0; m < kMR; ++m) {
    for (int j = 0; j < kNR; ++j) c[static_cast<size_t>(m) * ldc + j] = acc[m][j];
  }
}

#endif

// Cache blocking. A block: kMC x kKC floats packed into L2; B block:
// kKC x kNC streamed from L3. Sized for a ~1 MB L2 single-core part.
constexpr int kMC = 128;
constexpr int kKC = 512;
constexpr int kNC = 3072;

// Packs an A block into kMR-row panels, zero-padding the row tail.
// trans=false: a is (m x k) row-major. trans=true: a is (k x m), packed
// as its transpose.
void PackA(const float* a, int lda, bool trans, int ic, int pc, int mc,
           int kc, float* ap) {
  for (int ir = 0; ir < mc; ir += kMR) {
    int mr = std::min(kMR, mc - ir);
    float* panel = ap + static_cast<size_t>(ir) * kc;
    if (trans) {
      for (int p = 0; p < kc; ++p) {
        const float* src = a + static_cast<size_t>(pc + p) * lda + ic + ir;
        float* dst = panel + static_cast<size_t>(p) * kMR;
        for (int m = 0; m < mr; ++m) dst[m] = src[m];
        for (int m = mr; m < kMR; ++m) dst[m] = 0.0f;
      }
    } else {
      for (int p = 0; p < kc; ++p) {
        float* dst = panel + static_cast<size_t>(p) * kMR;
        for (int m = 0; m < mr; ++m) {
          dst[m] = a[static_cast<size_t>(ic + ir + m) * lda + pc + p];
        }
        for (int m = mr; m < kMR; ++m) dst[m] = 0.0f;
      }
    }
  }
}

// Packs a B block into kNR-column panels, zero-padding the column tail.
// trans=false: b is (k x n) row-major. trans=true: b is (n x k).
void PackB(const float* b, int ldb, bool trans, int pc, int jc, int kc,
           int nc, float* bp) {
#pragma omp parallel for schedule(static)
  for (int jr = 0; jr < nc; jr += kNR) {
    int nr = std::min(kNR, nc - jr);
    float* panel = bp + static_cast<size_t>(jr) * kc;
    if (trans) {
      for (int p = 0; p < kc; ++p) {
        float* dst = panel + static_cast<size_t>(p) * kNR;
        for (int j = 0; j < nr; ++j) {
          dst[j] = b[static_cast<size_t>(jc + jr + j) * ldb + pc + p];
        }
        for (int j = nr; j < kNR; ++j) dst[j] = 0.0f;
      }
    } else {
      for (int p = 0; p < kc; ++p) {
        const float* src = b + static_cast<size_t>(pc + p) * ldb + jc + jr;
        float* dst = panel + static_cast<size_t>(p) * kNR;
        for (int j = 0; j < nr; ++j) dst[j] = src[j];
        for (int j = nr; j < kNR; ++j) dst[j] = 0.0f;
      }
    }
  }
}

// Shared driver: C(m x n) = op(A) * op(B), with op controlled by the
// trans flags. Work buffers are kept per thread to avoid reallocation.
void GemmDriver(int m, int n, int k, const float* a, int lda, bool atrans,
                const float* b, int ldb, bool btrans, float* c, int ldc,
                bool accumulate) {
  if (m <= 0 || n <= 0) return;
  if (k <= 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) {
        std::memset(c + static_cast<size_t>(i) * ldc, 0, sizeof(float) * n);
      }
    }
    return;
  }
  static thread_local std::vector<float> apack;
  static thread_local std::vector<float> bpack;
  apack.resize(static_cast<size_t>(kMC + kMR) * kKC);
  bpack.resize(static_cast<size_t>(kNC + kNR) * kKC);

  for (int jc = 0; jc < n; jc += kNC) {
    int nc = std::min(kNC, n - jc);
    int nc_panels = (nc + kNR - 1) / kNR;
    for (int pc = 0; pc < k; pc += kKC) {
      int kc = std::min(kKC, k - pc);
      bool add = accumulate || pc > 0;
      PackB(b, ldb, btrans, pc, jc, kc, nc, bpack.data());
      for (int ic = 0; ic < m; ic += kMC) {
        int mc = std::min(kMC, m - ic);
        int mc_panels = (mc + kMR - 1) / kMR;
        PackA(a, lda, atrans, ic, pc, mc, kc, apack.data());
#pragma omp parallel for collapse(2) schedule(static)
        for (int jp = 0; jp < nc_panels; ++jp) {
          for (int ip = 0; ip < mc_panels; ++ip) {
            int jr = jp * kNR;
            int ir = ip * kMR;
            int nr = std::min(kNR, nc - jr);
            int mr = std::min(kMR, mc - ir);
            const float* apanel = apack.data() + static_cast<size_t>(ir) * kc;
            const float* bpanel = bpack.data() + static_cast<size_t>(jr) * kc;
            float* ctile =
                c + static_cast<size_t>(ic + ir) * ldc + jc + jr;
            if (mr == kMR && nr == kNR) {
              MicroKernel(kc, apanel, bpanel, ctile, ldc, add);
            } else {
              float buf[kMR * kNR];
              MicroKernel(kc, apanel, bpanel, buf, kNR, false);
              for (int mm = 0; mm < mr; ++mm) {
                float* crow = ctile + static_cast<size_t>(mm) * ldc;
                const float* brow = buf + mm * kNR;
                if (add) {
                  for (int jj = 0; jj < nr; ++jj) crow[jj] += brow[jj];
                } else {
                  for (int jj = 0; jj < nr; ++jj) crow[jj] = brow[jj];
                }
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

void Gemm(int m, int n, int k, const float* a, const float* b, float* c,
          bool accumulate) {
  GemmDriver(m, n, k, a, k, false, b, n, false, c, n, accumulate);
}

void GemmNT(int m, int n, int k, const float* a, const float* b, float* c,
            bool accumulate) {
  GemmDriver(m, n, k, a, k, false, b, k, true, c, n, accumulate);
}

void GemmTN(int m, int n, int k, const float* a, const float* b, float* c,
            bool accumulate) {
  GemmDriver(m, n, k, a, m, true, b, n, false, c, n, accumulate);
}

// Reductions share the serial chunk schedule: per-chunk partials in index
// order, partials combined in chunk order. Only the chunk loop threads.

namespace {

template <typename ChunkFn>
double ChunkedReduce(size_t n, const ChunkFn& fn) {
  if (n == 0) return 0.0;
  int64_t nchunks = static_cast<int64_t>((n + kReduceChunk - 1) / kReduceChunk);
  if (nchunks == 1) return fn(0, n);
  std::vector<double> parts(nchunks);
#pragma omp parallel for schedule(static)
  for (int64_t ci = 0; ci < nchunks; ++ci) {
    size_t c0 = static_cast<size_t>(ci) * kReduceChunk;
    size_t c1 = std::min(n, c0 + kReduceChunk);
    parts[ci] = fn(c0, c1);
  }
  double total = 0.0;
  for (int64_t ci = 0; ci < nchunks; ++ci) total += parts[ci];
  return total;
}

}  // namespace

double Sum(const float* x, size_t n) {
  return ChunkedReduce(n, [x](size_t a, size_t b) {
    double part = 0.0;
    for (size_t i = a; i < b; ++i) part += x[i];
    return part;
  });
}

double SumAbs(const float* x, size_t n) {
  return ChunkedReduce(n, [x](size_t a, size_t b) {
    double part = 0.0;
    for (size_t i = a; i < b; ++i) part += std::fabs(x[i]);
    return part;
  });
}

double Dot(const float* a, const float* b, size_t n) {
  return ChunkedReduce(n, [a, b](size_t i0, size_t i1) {
    double part = 0.0;
    for (size_t i = i0; i < i1; ++i) {
      part += static_cast<double>(a[i]) * b[i];
    }
    return part;
  });
}

double SumSqDiff(const float* a, const float* b, size_t n) {
  return ChunkedReduce(n, [a, b](size_t i0, size_t i1) {
    double part = 0.0;
    for (size_t i = i0; i < i1; ++i) {
      double d = static_cast<double>(a[i]) - b[i];
      part += d * d;
    }
    return part;
  });
}

void LeakyRelu(const float* x, size_t n, float slope, float* y) {
  int64_t sn = static_cast<int64_t>(n);
#pragma omp parallel for simd schedule(static)
  for (int64_t i = 0; i < sn; ++i) {
    y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
  }
}

void LeakyReluGrad(const float* x, const float* gy, size_t n, float slope,
                   float* gx) {
  int64_t sn = static_cast<int64_t>(n);
#pragma omp parallel for simd schedule(static)
  for (int64_t i = 0; i < sn; ++i) {
    gx[i] = x[i] > 0.0f ? gy[i] : slope * gy[i];
  }
}

void ScaledTanh(const float* x, size_t n, float* y) {
  int64_t sn = static_cast<int64_t>(n);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < sn; ++i) y[i] = 0.5f * std::tanh(x[i]);
}

void ScaledTanhGrad(const float* y, const float* gy, size_t n, float* gx) {
  int64_t sn = static_cast<int64_t>(n);
#pragma omp parallel for simd schedule(static)
  for (int64_t i = 0; i < sn; ++i) {
    gx[i] = gy[i] * (0.5f - 2.0f * y[i] * y[i]);
  }
}

void Axpy(float alpha, const float* x, float* y, size_t n) {
  int64_t sn = static_cast<int64_t>(n);
#pragma omp parallel for simd schedule(static)
  for (int64_t i = 0; i < sn; ++i) y[i] += alpha * x[i];
}

void Scale(float* x, size_t n, float alpha) {
  int64_t sn = static_cast<int64_t>(n);
#pragma omp parallel for simd schedule(static)
  for (int64_t i = 0; i < sn; ++i) x[i] *= alpha;
}

void AdamStep(float* w, const float* g, float* m, float* v, size_t n,
              float lr, float beta1, float beta2, float eps, float inv_bias1,
              float inv_bias2) {
  int64_t sn = static_cast<int64_t>(n);
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < sn; ++i) {
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
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const float* src = in + static_cast<size_t>(y) * w;
    float* dst = tmp.data() + static_cast<size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      float acc = 0.0f;
      for (int j = 0; j < k; ++j) acc += taps[j] * src[x + j];
      dst[x] = acc;
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < oh; ++y) {
    float* dst = out + static_cast<size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      float acc = 0.0f;
      for (int i = 0; i < k; ++i) {
        acc += taps[i] * tmp[static_cast<size_t>(y + i) * ow + x];
      }
      dst[x] = acc;
    }
  }
}

void SeparableCorrelateValidAdjoint(const float* gout, int h, int w,
                                    const float* taps, int k, float* gin) {
  int ow = w - k + 1;
  int oh = h - k + 1;
  std::vector<float> tmp(static_cast<size_t>(h) * ow);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    float* dst = tmp.data() + static_cast<size_t>(y) * ow;
    std::memset(dst, 0, sizeof(float) * ow);
    for (int i = 0; i < k; ++i) {
      int oy = y - i;
      if (oy < 0 || oy >= oh) continue;
      const float* src = gout + static_cast<size_t>(oy) * ow;
      for (int x = 0; x < ow; ++x) dst[x] += taps[i] * src[x];
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const float* src = tmp.data() + static_cast<size_t>(y) * ow;
    float* dst = gin + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int j = 0; j < k; ++j) {
        int ox = x - j;
        if (ox < 0 || ox >= ow) continue;
        acc += taps[j] * src[ox];
      }
      dst[x] = acc;
    }
  }
}

void SeparableCorrelateReplicate(const float* in, int h, int w,
                                 const float* taps, int k, float* out) {
  int r = k / 2;
  std::vector<float> tmp(static_cast<size_t>(h) * w);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const float* src = in + static_cast<size_t>(y) * w;
    float* dst = tmp.data() + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int j = 0; j < k; ++j) {
        acc += taps[j] * src[std::clamp(x + j - r, 0, w - 1)];
      }
      dst[x] = acc;
    }
  }
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    float* dst = out + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int i = 0; i < k; ++i) {
        int sy = std::clamp(y + i - r, 0, h - 1);
        acc += taps[i] * tmp[static_cast<size_t>(sy) * w + x];
      }
      dst[x] = acc;
    }
  }
}

void Correlate3x3Zero(const float* in, int h, int w, const float* k9,
                      float* out) {
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    float* dst = out + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int dy = -1; dy <= 1; ++dy) {
        int sy = y + dy;
        if (sy < 0 || sy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          int sx = x + dx;
          if (sx < 0 || sx >= w) continue;
          acc += k9[(dy + 1) * 3 + dx + 1] * in[static_cast<size_t>(sy) * w + sx];
        }
      }
      dst[x] = acc;
    }
  }
}

void AvgPool2x2(const float* in, int h, int w, float* out) {
  int oh = h / 2, ow = w / 2;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < oh; ++y) {
    float* dst = out + static_cast<size_t>(y) * ow;
    const float* top = in + static_cast<size_t>(2 * y) * w;
    const float* bot = top + w;
    for (int x = 0; x < ow; ++x) {
      dst[x] = 0.25f * (top[2 * x] + top[2 * x + 1] + bot[2 * x] +
                        bot[2 * x + 1]);
    }
  }
}

void AvgPool2x2Adjoint(const float* gout, int h, int w, float* gin) {
  int oh = h / 2, ow = w / 2;
  std::memset(gin, 0, sizeof(float) * h * w);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < oh; ++y) {
    const float* src = gout + static_cast<size_t>(y) * ow;
    float* top = gin + static_cast<size_t>(2 * y) * w;
    float* bot = top + w;
    for (int x = 0; x < ow; ++x) {
      float g = 0.25f * src[x];
      top[2 * x] += g;
      top[2 * x + 1] += g;
      bot[2 * x] += g;
      bot[2 * x + 1] += g;
    }
  }
}

void UpsampleNearest2x(const float* in, int h, int w, float* out) {
  int ow = 2 * w;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < 2 * h; ++y) {
    const float* src = in + static_cast<size_t>(y / 2) * w;
    float* dst = out + static_cast<size_t>(y) * ow;
    for (int x = 0; x < w; ++x) {
      dst[2 * x] = src[x];
      dst[2 * x + 1] = src[x];
    }
  }
}

void UpsampleNearest2xAdjoint(const float* gout, int h, int w, float* gin) {
  int ow = 2 * w;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y) {
    const float* top = gout + static_cast<size_t>(2 * y) * ow;
    const float* bot = top + ow;
    float* dst = gin + static_cast<size_t>(y) * w;
    for (int x = 0; x < w; ++x) {
      dst[x] = top[2 * x] + top[2 * x + 1] + bot[2 * x] + bot[2 * x + 1];
    }
  }
}

void ResizeBilinear(const float* in, int h, int w, int oh, int ow,
                    float* out) {
  double sy = static_cast<double>(h) / oh;
  double sx = static_cast<double>(w) / ow;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < oh; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y0c = std::clamp(y0, 0, h - 1);
    int y1c = std::clamp(y0 + 1, 0, h - 1);
    float* dst = out + static_cast<size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x0c = std::clamp(x0, 0, w - 1);
      int x1c = std::clamp(x0 + 1, 0, w - 1);
      double top = (1.0 - wx) * in[y0c * w + x0c] + wx * in[y0c * w + x1c];
      double bot = (1.0 - wx) * in[y1c * w + x0c] + wx * in[y1c * w + x1c];
      dst[x] = static_cast<float>((1.0 - wy) * top + wy * bot);
    }
  }
}

// Convolution via im2col + GEMM. The col matrix has one row per
// (ci, ky, kx) tap, one column per output pixel.

namespace {

inline int MapPad(int p, int n, PadMode pad) {
  if (p >= 0 && p < n) return p;
  if (pad == PadMode::kZero) return -1;
  return detail::ReflectIndex(p, n);
}

void Im2Col(const float* in, int cin, int h, int w, int stride, PadMode pad,
            int oh, int ow, float* col) {
  int rows = cin * 9;
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows; ++r) {
    int ci = r / 9;
    int ky = (r % 9) / 3;
    int kx = r % 3;
    const float* plane = in + static_cast<size_t>(ci) * h * w;
    float* dst = col + static_cast<size_t>(r) * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      int py = MapPad(oy * stride + ky - 1, h, pad);
      float* drow = dst + static_cast<size_t>(oy) * ow;
      if (py < 0) {
        std::memset(drow, 0, sizeof(float) * ow);
        continue;
      }
      const float* srow = plane + static_cast<size_t>(py) * w;
      for (int ox = 0; ox < ow; ++ox) {
        int px = MapPad(ox * stride + kx - 1, w, pad);
        drow[ox] = px < 0 ? 0.0f : srow[px];
      }
    }
  }
}

std::vector<float>& ColScratch() {
  static thread_local std::vector<float> scratch;
  return scratch;
}

}  // namespace

void Conv3x3Forward(const float* in, int cin, int h, int w,
                    const float* weights, const float* bias, int cout,
                    int stride, PadMode pad, float* out) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  int rows = cin * 9;
  size_t npix = static_cast<size_t>(oh) * ow;
  std::vector<float>& col = ColScratch();
  col.resize(static_cast<size_t>(rows) * npix);
  Im2Col(in, cin, h, w, stride, pad, oh, ow, col.data());
  Gemm(cout, static_cast<int>(npix), rows, weights, col.data(), out, false);
  if (bias) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
      float* plane = out + static_cast<size_t>(co) * npix;
      float b = bias[co];
      for (size_t i = 0; i < npix; ++i) plane[i] += b;
    }
  }
}

void Conv3x3BackwardInput(const float* gout, int cout, int h, int w,
                          const float* weights, int cin, int stride,
                          PadMode pad, float* gin) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  int rows = cin * 9;
  size_t npix = static_cast<size_t>(oh) * ow;
  std::vector<float>& dcol = ColScratch();
  dcol.resize(static_cast<size_t>(rows) * npix);
  GemmTN(rows, static_cast<int>(npix), cout, weights, gout, dcol.data(),
         false);
  std::memset(gin, 0, sizeof(float) * cin * h * w);
  // col2im: rows of one input channel touch only that channel's plane, so
  // the channel loop is safe to thread.
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) {
    float* dst = gin + static_cast<size_t>(ci) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const float* src =
            dcol.data() + (static_cast<size_t>(ci) * 9 + ky * 3 + kx) * npix;
        for (int oy = 0; oy < oh; ++oy) {
          int py = MapPad(oy * stride + ky - 1, h, pad);
          if (py < 0) continue;
          const float* srow = src + static_cast<size_t>(oy) * ow;
          float* drow = dst + static_cast<size_t>(py) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int px = MapPad(ox * stride + kx - 1, w, pad);
            if (px >= 0) drow[px] += srow[ox];
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
  int rows = cin * 9;
  size_t npix = static_cast<size_t>(oh) * ow;
  std::vector<float>& col = ColScratch();
  col.resize(static_cast<size_t>(rows) * npix);
  Im2Col(in, cin, h, w, stride, pad, oh, ow, col.data());
  GemmNT(cout, rows, static_cast<int>(npix), gout, col.data(), gweights,
         accumulate);
  if (gbias) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
      const float* plane = gout + static_cast<size_t>(co) * npix;
      double acc = 0.0;
      for (size_t i = 0; i < npix; ++i) acc += plane[i];
      if (accumulate) {
        gbias[co] += static_cast<float>(acc);
      } else {
        gbias[co] = static_cast<float>(acc);
      }
    }
  }
}

void Conv1x1Forward(const float* in, int cin, int h, int w,
                    const float* weights, const float* bias, int cout,
                    int stride, float* out) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  size_t npix = static_cast<size_t>(oh) * ow;
  const float* src = in;
  std::vector<float>& sub = ColScratch();
  if (stride != 1) {
    sub.resize(static_cast<size_t>(cin) * npix);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < cin; ++ci) {
      const float* plane = in + static_cast<size_t>(ci) * h * w;
      float* dst = sub.data() + static_cast<size_t>(ci) * npix;
      for (int oy = 0; oy < oh; ++oy) {
        const float* srow = plane + static_cast<size_t>(oy * stride) * w;
        float* drow = dst + static_cast<size_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) drow[ox] = srow[ox * stride];
      }
    }
    src = sub.data();
  }
  Gemm(cout, static_cast<int>(npix), cin, weights, src, out, false);
  if (bias) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
      float* plane = out + static_cast<size_t>(co) * npix;
      float b = bias[co];
      for (size_t i = 0; i < npix; ++i) plane[i] += b;
    }
  }
}

void Conv1x1BackwardInput(const float* gout, int cout, int h, int w,
                          const float* weights, int cin, int stride,
                          float* gin) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  size_t npix = static_cast<size_t>(oh) * ow;
  if (stride == 1) {
    GemmTN(cin, static_cast<int>(npix), cout, weights, gout, gin, false);
    return;
  }
  std::vector<float>& dsub = ColScratch();
  dsub.resize(static_cast<size_t>(cin) * npix);
  GemmTN(cin, static_cast<int>(npix), cout, weights, gout, dsub.data(),
         false);
  std::memset(gin, 0, sizeof(float) * cin * h * w);
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < cin; ++ci) {
    const float* src = dsub.data() + static_cast<size_t>(ci) * npix;
    float* plane = gin + static_cast<size_t>(ci) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      const float* srow = src + static_cast<size_t>(oy) * ow;
      float* drow = plane + static_cast<size_t>(oy * stride) * w;
      for (int ox = 0; ox < ow; ++ox) drow[ox * stride] = srow[ox];
    }
  }
}

void Conv1x1BackwardParams(const float* in, int cin, int h, int w,
                           const float* gout, int cout, int stride,
                           float* gweights, float* gbias, bool accumulate) {
  int oh = ConvOutDim(h, stride), ow = ConvOutDim(w, stride);
  size_t npix = static_cast<size_t>(oh) * ow;
  const float* src = in;
  std::vector<float>& sub = ColScratch();
  if (stride != 1) {
    sub.resize(static_cast<size_t>(cin) * npix);
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < cin; ++ci) {
      const float* plane = in + static_cast<size_t>(ci) * h * w;
      float* dst = sub.data() + static_cast<size_t>(ci) * npix;
      for (int oy = 0; oy < oh; ++oy) {
        const float* srow = plane + static_cast<size_t>(oy * stride) * w;
        float* drow = dst + static_cast<size_t>(oy) * ow;
        for (int ox = 0; ox < ow; ++ox) drow[ox] = srow[ox * stride];
      }
    }
    src = sub.data();
  }
  GemmNT(cout, cin, static_cast<int>(npix), gout, src, gweights, accumulate);
  if (gbias) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < cout; ++co) {
      const float* plane = gout + static_cast<size_t>(co) * npix;
      double acc = 0.0;
      for (size_t i = 0; i < npix; ++i) acc += plane[i];
      if (accumulate) {
        gbias[co] += static_cast<float>(acc);
      } else {
        gbias[co] = static_cast<float>(acc);
      }
    }
  }
}

}  // namespace parallel
}  // namespace kern
}  // namespace rgbjnd
