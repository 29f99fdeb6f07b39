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

#include "rgbjnd/nn.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

namespace rgbjnd {
namespace nn {

void Param::Resize(size_t n) {
  w.assign(n, 0.0f);
  g.assign(n, 0.0f);
  m.assign(n, 0.0f);
  v.assign(n, 0.0f);
}

void Param::ZeroGrad() { std::fill(g.begin(), g.end(), 0.0f); }

void Adam::Step(const std::vector<Param*>& params) {
  ++t_;
  float inv_bias1 =
      1.0f / (1.0f - std::pow(cfg_.beta1, static_cast<float>(t_)));
  float inv_bias2 =
      1.0f / (1.0f - std::pow(cfg_.beta2, static_cast<float>(t_)));
  for (Param* p : params) {
    kern::AdamStep(p->w.data(), p->g.data(), p->m.data(), p->v.data(),
                   p->size(), cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps,
                   inv_bias1, inv_bias2);
  }
}

void Adam::set_step_count(int64_t t) {
  if (t < 0) throw ParameterError("adam step count must be non-negative");
  t_ = t;
}

namespace {

// Kaiming-style init for a fan_in-sized receptive field.
void HeInit(Param& p, size_t n, int fan_in, Pcg32& rng) {
  p.Resize(n);
  float std = std::sqrt(2.0f / static_cast<float>(fan_in));
  for (size_t i = 0; i < n; ++i) {
    p.w[i] = std * static_cast<float>(rng.Normal());
  }
}

}  // namespace

void Conv3x3Layer::Init(int cin, int cout, int stride, kern::PadMode pad,
                        Pcg32& rng) {
  if (cin <= 0 || cout <= 0 || (stride != 1 && stride != 2)) {
    throw ParameterError("conv3x3: bad configuration");
  }
  cin_ = cin;
  cout_ = cout;
  stride_ = stride;
  pad_ = pad;
  HeInit(w_, static_cast<size_t>(cout) * cin * 9, cin * 9, rng);
  b_.Resize(static_cast<size_t>(cout));
}

Tensor Conv3x3Layer::Forward(const Tensor& x, bool train) {
  if (x.c() != cin_) {
    throw DimensionError("conv3x3: input has " + std::to_string(x.c()) +
                         " channels, layer expects " + std::to_string(cin_));
  }
  Tensor y(cout_, kern::ConvOutDim(x.h(), stride_),
           kern::ConvOutDim(x.w(), stride_));
  kern::Conv3x3Forward(x.data(), cin_, x.h(), x.w(), w_.w.data(), b_.w.data(),
                       cout_, stride_, pad_, y.data());
  if (train) x_ = x;
  return y;
}

Tensor Conv3x3Layer::Backward(const Tensor& gy) {
  if (x_.empty()) throw StateError("conv3x3: backward without forward");
  Tensor gx(cin_, x_.h(), x_.w());
  kern::Conv3x3BackwardInput(gy.data(), cout_, x_.h(), x_.w(), w_.w.data(),
                             cin_, stride_, pad_, gx.data());
  kern::Conv3x3BackwardParams(x_.data(), cin_, x_.h(), x_.w(), gy.data(),
                              cout_, stride_, pad_, w_.g.data(), b_.g.data(),
                              /*accumulate=*/true);
  return gx;
}

void Conv3x3Layer::CollectParams(std::vector<Param*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

void Conv3x3Layer::CollectBlobs(
    const std::string& prefix,
    std::vector<std::pair<std::string, Param*>>& out) {
  out.emplace_back(prefix + ".w", &w_);
  out.emplace_back(prefix + ".b", &b_);
}

void Conv1x1Layer::Init(int cin, int cout, int stride, Pcg32& rng) {
  if (cin <= 0 || cout <= 0 || (stride != 1 && stride != 2)) {
    throw ParameterError("conv1x1: bad configuration");
  }
  cin_ = cin;
  cout_ = cout;
  stride_ = stride;
  HeInit(w_, static_cast<size_t>(cout) * cin, cin, rng);
  b_.Resize(static_cast<size_t>(cout));
}

Tensor Conv1x1Layer::Forward(const Tensor& x, bool train) {
  if (x.c() != cin_) throw DimensionError("conv1x1: channel mismatch");
  Tensor y(cout_, kern::ConvOutDim(x.h(), stride_),
           kern::ConvOutDim(x.w(), stride_));
  kern::Conv1x1Forward(x.data(), cin_, x.h(), x.w(), w_.w.data(), b_.w.data(),
                       cout_, stride_, y.data());
  if (train) x_ = x;
  return y;
}

Tensor Conv1x1Layer::Backward(const Tensor& gy) {
  if (x_.empty()) throw StateError("conv1x1: backward without forward");
  Tensor gx(cin_, x_.h(), x_.w());
  kern::Conv1x1BackwardInput(gy.data(), cout_, x_.h(), x_.w(), w_.w.data(),
                             cin_, stride_, gx.data());
  kern::Conv1x1BackwardParams(x_.data(), cin_, x_.h(), x_.w(), gy.data(),
                              cout_, stride_, w_.g.data(), b_.g.data(),
                              /*accumulate=*/true);
  return gx;
}

void Conv1x1Layer::CollectParams(std::vector<Param*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

void Conv1x1Layer::CollectBlobs(
    const std::string& prefix,
    std::vector<std::pair<std::string, Param*>>& out) {
  out.emplace_back(prefix + ".w", &w_);
  out.emplace_back(prefix + ".b", &b_);
}

Tensor LeakyReluLayer::Forward(const Tensor& x, bool train) {
  Tensor y(x.c(), x.h(), x.w());
  kern::LeakyRelu(x.data(), x.size(), slope_, y.data());
  if (train) x_ = x;
  return y;
}

Tensor LeakyReluLayer::Backward(const Tensor& gy) {
  if (x_.empty()) throw StateError("leaky_relu: backward without forward");
  Tensor gx(x_.c(), x_.h(), x_.w());
  kern::LeakyReluGrad(x_.data(), gy.data(), x_.size(), slope_, gx.data());
  return gx;
}

Tensor ScaledTanhLayer::Forward(const Tensor& x, bool train) {
  Tensor y(x.c(), x.h(), x.w());
  kern::ScaledTanh(x.data(), x.size(), y.data());
  if (train) y_ = y;
  return y;
}

Tensor ScaledTanhLayer::Backward(const Tensor& gy) {
  if (y_.empty()) throw StateError("scaled_tanh: backward without forward");
  Tensor gx(y_.c(), y_.h(), y_.w());
  kern::ScaledTanhGrad(y_.data(), gy.data(), y_.size(), gx.data());
  return gx;
}

Tensor UpsampleNearestLayer::Forward(const Tensor& x, bool train) {
  Tensor y(x.c(), x.h() * 2, x.w() * 2);
  for (int c = 0; c < x.c(); ++c) {
    kern::UpsampleNearest2x(x.Plane(c), x.h(), x.w(), y.Plane(c));
  }
  if (train) {
    c_ = x.c();
    h_ = x.h();
    w_ = x.w();
  }
  return y;
}

Tensor UpsampleNearestLayer::Backward(const Tensor& gy) {
  if (c_ == 0) throw StateError("upsample: backward without forward");
  Tensor gx(c_, h_, w_);
  for (int c = 0; c < c_; ++c) {
    kern::UpsampleNearest2xAdjoint(gy.Plane(c), h_, w_, gx.Plane(c));
  }
  return gx;
}

void GroupNormLayer::Init(int channels, int groups) {
  if (channels <= 0 || groups <= 0 || channels % groups != 0) {
    throw ParameterError("group_norm: channels must divide into groups");
  }
  channels_ = channels;
  groups_ = groups;
  gamma_.Resize(static_cast<size_t>(channels));
  beta_.Resize(static_cast<size_t>(channels));
  std::fill(gamma_.w.begin(), gamma_.w.end(), 1.0f);
}

Tensor GroupNormLayer::Forward(const Tensor& x, bool train) {
  if (x.c() != channels_) throw DimensionError("group_norm: channel mismatch");
  constexpr double kEps = 1e-5;
  int cpg = channels_ / groups_;
  size_t plane = static_cast<size_t>(x.h()) * x.w();
  size_t gsize = plane * cpg;
  Tensor y(x.c(), x.h(), x.w());
  Tensor xhat(x.c(), x.h(), x.w());
  std::vector<double> inv_std(groups_);
  for (int g = 0; g < groups_; ++g) {
    const float* gx = x.data() + static_cast<size_t>(g) * gsize;
    double mu = kern::Sum(gx, gsize) / static_cast<double>(gsize);
    double acc = 0.0;
    for (size_t i = 0; i < gsize; ++i) {
      double d = gx[i] - mu;
      acc += d * d;
    }
    double var = acc / static_cast<double>(gsize);
    double is = 1.0 / std::sqrt(var + kEps);
    inv_std[g] = is;
    float* xh = xhat.data() + static_cast<size_t>(g) * gsize;
    float* gy = y.data() + static_cast<size_t>(g) * gsize;
    for (int cc = 0; cc < cpg; ++cc) {
      int c = g * cpg + cc;
      float gamma = gamma_.w[c], beta = beta_.w[c];
      for (size_t i = 0; i < plane; ++i) {
        size_t k = static_cast<size_t>(cc) * plane + i;
        float h = static_cast<float>((gx[k] - mu) * is);
        xh[k] = h;
        gy[k] = gamma * h + beta;
      }
    }
  }
  if (train) {
    xhat_ = std::move(xhat);
    inv_std_ = std::move(inv_std);
  }
  return y;
}

Tensor GroupNormLayer::Backward(const Tensor& gy) {
  if (xhat_.empty()) throw StateError("group_norm: backward without forward");
  int cpg = channels_ / groups_;
  size_t plane = static_cast<size_t>(xhat_.h()) * xhat_.w();
  size_t gsize = plane * cpg;
  Tensor gx(xhat_.c(), xhat_.h(), xhat_.w());
  for (int g = 0; g < groups_; ++g) {
    const float* xh = xhat_.data() + static_cast<size_t>(g) * gsize;
    const float* gyp = gy.data() + static_cast<size_t>(g) * gsize;
    float* gxp = gx.data() + static_cast<size_t>(g) * gsize;
    // Accumulate per-channel affine grads and the two group reductions.
    double sum_gh = 0.0, sum_gh_xhat = 0.0;
    for (int cc = 0; cc < cpg; ++cc) {
      int c = g * cpg + cc;
      double dgamma = 0.0, dbeta = 0.0;
      double gamma = gamma_.w[c];
      for (size_t i = 0; i < plane; ++i) {
        size_t k = static_cast<size_t>(cc) * plane + i;
        dgamma += static_cast<double>(gyp[k]) * xh[k];
        dbeta += gyp[k];
        double gh = gamma * gyp[k];
        sum_gh += gh;
        sum_gh_xhat += gh * xh[k];
      }
      gamma_.g[c] += static_cast<float>(dgamma);
      beta_.g[c] += static_cast<float>(dbeta);
    }
    double n = static_cast<double>(gsize);
    double mean_gh = sum_gh / n;
    double mean_gh_xhat = sum_gh_xhat / n;
    double is = inv_std_[g];
    for (int cc = 0; cc < cpg; ++cc) {
      int c = g * cpg + cc;
      double gamma = gamma_.w[c];
      for (size_t i = 0; i < plane; ++i) {
        size_t k = static_cast<size_t>(cc) * plane + i;
        double gh = gamma * gyp[k];
        gxp[k] =
            static_cast<float>(is * (gh - mean_gh - xh[k] * mean_gh_xhat));
      }
    }
  }
  return gx;
}

void GroupNormLayer::CollectParams(std::vector<Param*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void GroupNormLayer::CollectBlobs(
    const std::string& prefix,
    std::vector<std::pair<std::string, Param*>>& out) {
  out.emplace_back(prefix + ".gamma", &gamma_);
  out.emplace_back(prefix + ".beta", &beta_);
}

void LinearLayer::Init(int n_in, int n_out, Pcg32& rng) {
  if (n_in <= 0 || n_out <= 0) throw ParameterError("linear: bad dims");
  n_in_ = n_in;
  n_out_ = n_out;
  HeInit(w_, static_cast<size_t>(n_out) * n_in, n_in, rng);
  b_.Resize(static_cast<size_t>(n_out));
}

Tensor LinearLayer::Forward(const Tensor& x, bool train) {
  if (static_cast<int>(x.size()) != n_in_) {
    throw DimensionError("linear: input size mismatch");
  }
  Tensor y(1, 1, n_out_);
  for (int o = 0; o < n_out_; ++o) {
    double acc = b_.w[o];
    const float* row = w_.w.data() + static_cast<size_t>(o) * n_in_;
    for (int i = 0; i < n_in_; ++i) acc += double(row[i]) * x.data()[i];
    y.data()[o] = static_cast<float>(acc);
  }
  if (train) x_ = x;
  return y;
}

Tensor LinearLayer::Backward(const Tensor& gy) {
  if (x_.empty()) throw StateError("linear: backward without forward");
  Tensor gx(x_.c(), x_.h(), x_.w());
  gx.Fill(0.0f);
  for (int o = 0; o < n_out_; ++o) {
    float go = gy.data()[o];
    const float* row = w_.w.data() + static_cast<size_t>(o) * n_in_;
    float* grow = w_.g.data() + static_cast<size_t>(o) * n_in_;
    for (int i = 0; i < n_in_; ++i) {
      grow[i] += go * x_.data()[i];
      gx.data()[i] += go * row[i];
    }
    b_.g[o] += go;
  }
  return gx;
}

void LinearLayer::CollectParams(std::vector<Param*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

void LinearLayer::CollectBlobs(
    const std::string& prefix,
    std::vector<std::pair<std::string, Param*>>& out) {
  out.emplace_back(prefix + ".w", &w_);
  out.emplace_back(prefix + ".b", &b_);
}

Tensor GlobalAvgPoolLayer::Forward(const Tensor& x, bool train) {
  Tensor y(x.c(), 1, 1);
  size_t plane = static_cast<size_t>(x.h()) * x.w();
  for (int c = 0; c < x.c(); ++c) {
    y.data()[c] =
        static_cast<float>(kern::Sum(x.Plane(c), plane) / double(plane));
  }
  if (train) {
    h_ = x.h();
    w_ = x.w();
  }
  return y;
}

Tensor GlobalAvgPoolLayer::Backward(const Tensor& gy) {
  if (h_ == 0) throw StateError("gap: backward without forward");
  Tensor gx(gy.c(), h_, w_);
  size_t plane = static_cast<size_t>(h_) * w_;
  float inv = 1.0f / static_cast<float>(plane);
  for (int c = 0; c < gy.c(); ++c) {
    float v = gy.data()[c] * inv;
    std::fill(gx.Plane(c), gx.Plane(c) + plane, v);
  }
  return gx;
}

double SoftmaxCrossEntropy(const Tensor& logits, int target, Tensor* probs,
                           Tensor* dlogits) {
  int n = static_cast<int>(logits.size());
  if (target < 0 || target >= n) {
    throw ParameterError("softmax_ce: target out of range");
  }
  double mx = logits.data()[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, double(logits.data()[i]));
  double denom = 0.0;
  std::vector<double> e(n);
  for (int i = 0; i < n; ++i) {
    e[i] = std::exp(double(logits.data()[i]) - mx);
    denom += e[i];
  }
  double loss = -(double(logits.data()[target]) - mx - std::log(denom));
  for (int i = 0; i < n; ++i) {
    double p = e[i] / denom;
    if (probs) probs->data()[i] = static_cast<float>(p);
    if (dlogits) {
      dlogits->data()[i] = static_cast<float>(p - (i == target ? 1.0 : 0.0));
    }
  }
  return loss;
}

namespace {

constexpr char kBlobMagic[4] = {'R', 'J', 'C', 'K'};

struct FileCloserNn {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtrNn = std::unique_ptr<std::FILE, FileCloserNn>;

void WriteU32(std::FILE* f, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  if (std::fwrite(b, 1, 4, f) != 4) throw DataError("checkpoint write failed");
}

uint32_t ReadU32(std::FILE* f) {
  unsigned char b[4];
  if (std::fread(b, 1, 4, f) != 4) throw DataError("checkpoint truncated");
  return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 |
         uint32_t(b[3]) << 24;
}

}  // namespace

void SaveBlobs(
    const std::string& path, uint32_t version,
    const std::vector<std::pair<std::string, const std::vector<float>*>>&
        blobs) {
  FilePtrNn f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot open checkpoint for writing: '" + path + "'");
  if (std::fwrite(kBlobMagic, 1, 4, f.get()) != 4) {
    throw DataError("checkpoint write failed");
  }
  WriteU32(f.get(), version);
  WriteU32(f.get(), static_cast<uint32_t>(blobs.size()));
  for (const auto& [name, vec] : blobs) {
    WriteU32(f.get(), static_cast<uint32_t>(name.size()));
    if (std::fwrite(name.data(), 1, name.size(), f.get()) != name.size()) {
      throw DataError("checkpoint write failed");
    }
    WriteU32(f.get(), static_cast<uint32_t>(vec->size()));
    if (std::fwrite(vec->data(), sizeof(float), vec->size(), f.get()) !=
        vec->size()) {
      throw DataError("checkpoint write failed");
    }
  }
}

std::map<std::string, std::vector<float>> LoadBlobs(const std::string& path,
                                                    uint32_t expected_version) {
  FilePtrNn f(std::fopen(path.c_str(), "rb"));
  if (!f) throw DataError("cannot open checkpoint: '" + path + "'");
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4 ||
      std::memcmp(magic, kBlobMagic, 4) != 0) {
    throw DataError("not a checkpoint file: '" + path + "'");
  }
  uint32_t version = ReadU32(f.get());
  if (version != expected_version) {
    throw DataError("checkpoint version " + std::to_string(version) +
                    " does not match expected " +
                    std::to_string(expected_version) + ": '" + path + "'");
  }
  uint32_t count = ReadU32(f.get());
  if (count > 100000) throw DataError("implausible checkpoint blob count");
  std::map<std::string, std::vector<float>> out;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = ReadU32(f.get());
    if (name_len > 4096) throw DataError("implausible checkpoint name length");
    std::string name(name_len, '\0');
    if (std::fread(name.data(), 1, name_len, f.get()) != name_len) {
      throw DataError("checkpoint truncated");
    }
    uint32_t n = ReadU32(f.get());
    std::vector<float> vec(n);
    if (std::fread(vec.data(), sizeof(float), n, f.get()) != n) {
      throw DataError("checkpoint truncated");
    }
    if (!out.emplace(std::move(name), std::move(vec)).second) {
      throw DataError("duplicate blob name in checkpoint");
    }
  }
  return out;
}

}  // namespace nn
}  // namespace rgbjnd
