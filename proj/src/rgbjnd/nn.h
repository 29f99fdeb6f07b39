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

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rgbjnd/base.h"
#include "rgbjnd/kernels.h"
#include "rgbjnd/tensor.h"

namespace rgbjnd {
namespace nn {

// One learnable tensor with its gradient and ADAM moments, stored flat.
// Layers own their Params; optimizers see them through CollectParams.
struct Param {
  std::vector<float> w, g, m, v;

  void Resize(size_t n);
  void ZeroGrad();
  size_t size() const { return w.size(); }
};

struct AdamConfig {
  float lr = 1e-5f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// Bias-corrected ADAM over a fixed parameter list. Step count is part of
// the state and must be checkpointed for exact training resumption.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  void Step(const std::vector<Param*>& params);
  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t);
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
};

// Layers follow one convention: Forward(x, train) caches whatever the
// backward pass needs only when train is true; Backward(gy) accumulates
// into the layer's Param gradients and returns gx. Backward must see the
// activations of the immediately preceding Forward.

class Conv3x3Layer {
 public:
  void Init(int cin, int cout, int stride, kern::PadMode pad, Pcg32& rng);
  Tensor Forward(const Tensor& x, bool train);
  Tensor Backward(const Tensor& gy);
  void CollectParams(std::vector<Param*>& out);
  void CollectBlobs(const std::string& prefix,
                    std::vector<std::pair<std::string, Param*>>& out);
  int cin() const { return cin_; }
  int cout() const { return cout_; }

 private:
  int cin_ = 0, cout_ = 0, stride_ = 1;
  kern::PadMode pad_ = kern::PadMode::kZero;
  Param w_, b_;
  Tensor x_;
};

class Conv1x1Layer {
 public:
  void Init(int cin, int cout, int stride, Pcg32& rng);
  Tensor Forward(const Tensor& x, bool train);
  Tensor Backward(const Tensor& gy);
  void CollectParams(std::vector<Param*>& out);
  void CollectBlobs(const std::string& prefix,
                    std::vector<std::pair<std::string, Param*>>& out);

 private:
  int cin_ = 0, cout_ = 0, stride_ = 1;
  Param w_, b_;
  Tensor x_;
};

class LeakyReluLayer {
 public:
  explicit LeakyReluLayer(float slope = 0.2f) : slope_(slope) {}
  Tensor Forward(const Tensor& x, bool train);
  Tensor Backward(const Tensor& gy);

 private:
  float slope_;
  Tensor x_;
};

// y = 0.5 * tanh(x), the generator's output squash.
class ScaledTanhLayer {
 public:
  Tensor Forward(const Tensor& x, bool train);
  Tensor Backward(const Tensor& gy);

 private:
  Tensor y_;
};

class UpsampleNearestLayer {
 public:
  Tensor Forward(const Tensor& x, bool train);
  Tensor Backward(const Tensor& gy);

 private:
  int h_ = 0, w_ = 0, c_ = 0;
};

// Per-group normalization with learned per-channel affine. Channel count
// must divide evenly into groups. Statistics are computed in double and
// deterministically.
class GroupNormLayer {
 public:
  void Init(int channels, int groups);
  Tensor Forward(const Tensor& x, bool train);
  Tensor Backward(const Tensor& gy);
  void CollectParams(std::vector<Param*>& out);
  void CollectBlobs(const std::string& prefix,
                    std::vector<std::pair<std::string, Param*>>& out);

 private:
  int channels_ = 0, groups_ = 0;
  Param gamma_, beta_;
  Tensor xhat_;
  std::vector<double> inv_std_;
};

// Fully connected head on a flat vector, stored as (1, 1, n) tensors.
class LinearLayer {
 public:
  void Init(int n_in, int n_out, Pcg32& rng);
  Tensor Forward(const Tensor& x, bool train);
  Tensor Backward(const Tensor& gy);
  void CollectParams(std::vector<Param*>& out);
  void CollectBlobs(const std::string& prefix,
                    std::vector<std::pair<std::string, Param*>>& out);

 private:
  int n_in_ = 0, n_out_ = 0;
  Param w_, b_;
  Tensor x_;
};

// (c, h, w) -> (c, 1, 1) mean pool.
class GlobalAvgPoolLayer {
 public:
  Tensor Forward(const Tensor& x, bool train);
  Tensor Backward(const Tensor& gy);

 private:
  int h_ = 0, w_ = 0;
};

// Numerically stable softmax cross-entropy on a flat logit tensor.
// Returns the loss; fills probs (same shape) and, when dlogits is not
// null, the gradient d(loss)/d(logits) = probs - onehot(target).
double SoftmaxCrossEntropy(const Tensor& logits, int target, Tensor* probs,
                           Tensor* dlogits);

// Checkpoint container: named float blobs with a format version. The
// loader rejects files whose magic or version does not match, so stale
// checkpoints fail loudly instead of mis-deserializing.
void SaveBlobs(const std::string& path, uint32_t version,
               const std::vector<std::pair<std::string, const std::vector<float>*>>& blobs);
std::map<std::string, std::vector<float>> LoadBlobs(const std::string& path,
                                                    uint32_t expected_version);

}  // namespace nn
}  // namespace rgbjnd
