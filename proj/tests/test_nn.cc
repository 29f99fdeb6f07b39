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

#include <cmath>
#include <filesystem>
#include <functional>
#include <vector>

#include "doctest.h"
#include "rgbjnd/nn.h"
#include "test_util.h"

namespace rgbjnd {
namespace {

// Projection loss f = <L(x), r> with a fixed random r. The analytic
// gradient of f w.r.t. any scalar the layer depends on can be checked by
// central differences; h = 1e-2 balances truncation against float
// rounding for activations of order 1.
double Project(const Tensor& y, const std::vector<float>& r) {
  double acc = 0.0;
  for (size_t i = 0; i < y.size(); ++i) acc += double(y.data()[i]) * r[i];
  return acc;
}

// Checks d<f>/d(slot) for a set of sampled coordinates, where eval()
// recomputes the projection and slot points at the perturbed scalar.
void CheckFiniteDiff(float* slot, double analytic,
                     const std::function<double()>& eval) {
  const float h = 1e-2f;
  float saved = *slot;
  *slot = saved + h;
  double fp = eval();
  *slot = saved - h;
  double fm = eval();
  *slot = saved;
  double fd = (fp - fm) / (2.0 * h);
  CHECK(std::fabs(analytic - fd) <=
        1e-2 * std::max({1.0, std::fabs(analytic), std::fabs(fd)}));
}

TEST_CASE("conv3x3 layer: analytic gradients match finite differences") {
  for (int stride : {1, 2}) {
    for (auto pad : {kern::PadMode::kZero, kern::PadMode::kReflect}) {
      Pcg32 rng(77);
      nn::Conv3x3Layer conv;
      conv.Init(3, 4, stride, pad, rng);
      Tensor x = testutil::RandImage(3, 9, 10, 5);
      for (size_t i = 0; i < x.size(); ++i) x.data()[i] -= 0.5f;

      Tensor y0 = conv.Forward(x, true);
      std::vector<float> r = testutil::RandVec(y0.size(), 11, -1.0f, 1.0f);
      Tensor gy(y0.c(), y0.h(), y0.w());
      std::copy(r.begin(), r.end(), gy.data());

      std::vector<nn::Param*> params;
      conv.CollectParams(params);
      for (auto* p : params) p->ZeroGrad();
      Tensor gx = conv.Backward(gy);

      auto eval = [&]() { return Project(conv.Forward(x, false), r); };
      // A few input coordinates spread over the tensor.
      for (size_t i : {size_t{0}, x.size() / 3, x.size() / 2, x.size() - 1}) {
        CheckFiniteDiff(&x.data()[i], gx.data()[i], eval);
      }
      // Weight, then bias coordinates.
      for (size_t i : {size_t{0}, params[0]->size() / 2}) {
        CheckFiniteDiff(&params[0]->w[i], params[0]->g[i], eval);
      }
      CheckFiniteDiff(&params[1]->w[2], params[1]->g[2], eval);
    }
  }
}

TEST_CASE("conv1x1 layer: analytic gradients match finite differences") {
  for (int stride : {1, 2}) {
    Pcg32 rng(78);
    nn::Conv1x1Layer conv;
    conv.Init(4, 3, stride, rng);
    Tensor x = testutil::RandImage(4, 7, 9, 6);

    Tensor y0 = conv.Forward(x, true);
    std::vector<float> r = testutil::RandVec(y0.size(), 12, -1.0f, 1.0f);
    Tensor gy(y0.c(), y0.h(), y0.w());
    std::copy(r.begin(), r.end(), gy.data());

    std::vector<nn::Param*> params;
    conv.CollectParams(params);
    for (auto* p : params) p->ZeroGrad();
    Tensor gx = conv.Backward(gy);

    auto eval = [&]() { return Project(conv.Forward(x, false), r); };
    for (size_t i : {size_t{0}, x.size() / 2, x.size() - 1}) {
      CheckFiniteDiff(&x.data()[i], gx.data()[i], eval);
    }
    CheckFiniteDiff(&params[0]->w[3], params[0]->g[3], eval);
    CheckFiniteDiff(&params[1]->w[1], params[1]->g[1], eval);
  }
}

TEST_CASE("group norm: normalizes groups and matches finite differences") {
  Pcg32 rng(79);
  nn::GroupNormLayer gn;
  gn.Init(8, 4);
  Tensor x(8, 6, 5);
  for (size_t i = 0; i < x.size(); ++i) {
    x.data()[i] = 0.3f + 2.0f * static_cast<float>(rng.Normal());
  }
  Tensor y = gn.Forward(x, true);

  // With identity affine every group of the output has mean 0, var 1.
  size_t gsize = x.size() / 4;
  for (int g = 0; g < 4; ++g) {
    const float* p = y.data() + g * gsize;
    double mu = 0.0, var = 0.0;
    for (size_t i = 0; i < gsize; ++i) mu += p[i];
    mu /= double(gsize);
    for (size_t i = 0; i < gsize; ++i) var += (p[i] - mu) * (p[i] - mu);
    var /= double(gsize);
    CHECK(std::fabs(mu) < 1e-5);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }

  std::vector<float> r = testutil::RandVec(y.size(), 13, -1.0f, 1.0f);
  Tensor gy(y.c(), y.h(), y.w());
  std::copy(r.begin(), r.end(), gy.data());
  std::vector<nn::Param*> params;
  gn.CollectParams(params);
  for (auto* p : params) p->ZeroGrad();
  // Make the affine non-trivial before checking gradients.
  for (size_t i = 0; i < params[0]->size(); ++i) {
    params[0]->w[i] = 0.5f + 0.1f * static_cast<float>(i);
    params[1]->w[i] = 0.05f * static_cast<float>(i);
  }
  Tensor y1 = gn.Forward(x, true);
  Tensor gx = gn.Backward(gy);

  auto eval = [&]() { return Project(gn.Forward(x, false), r); };
  for (size_t i : {size_t{1}, x.size() / 2, x.size() - 2}) {
    CheckFiniteDiff(&x.data()[i], gx.data()[i], eval);
  }
  CheckFiniteDiff(&params[0]->w[3], params[0]->g[3], eval);
  CheckFiniteDiff(&params[1]->w[5], params[1]->g[5], eval);
}

TEST_CASE("activation and resampling layers: gradients match finite "
          "differences") {
  Tensor x = testutil::RandImage(2, 6, 7, 9);
  for (size_t i = 0; i < x.size(); ++i) x.data()[i] = 2.0f * x.data()[i] - 1.0f;

  SUBCASE("leaky relu") {
    nn::LeakyReluLayer act(0.2f);
    Tensor y0 = act.Forward(x, true);
    std::vector<float> r = testutil::RandVec(y0.size(), 14, -1.0f, 1.0f);
    Tensor gy(y0.c(), y0.h(), y0.w());
    std::copy(r.begin(), r.end(), gy.data());
    Tensor gx = act.Backward(gy);
    auto eval = [&]() { return Project(act.Forward(x, false), r); };
    for (size_t i : {size_t{0}, x.size() / 2, x.size() - 1}) {
      CheckFiniteDiff(&x.data()[i], gx.data()[i], eval);
    }
  }
  SUBCASE("scaled tanh") {
    nn::ScaledTanhLayer act;
    Tensor y0 = act.Forward(x, true);
    CHECK(testutil::MaxAbs(y0.data(), y0.size()) <= 0.5f);
    std::vector<float> r = testutil::RandVec(y0.size(), 15, -1.0f, 1.0f);
    Tensor gy(y0.c(), y0.h(), y0.w());
    std::copy(r.begin(), r.end(), gy.data());
    Tensor gx = act.Backward(gy);
    auto eval = [&]() { return Project(act.Forward(x, false), r); };
    for (size_t i : {size_t{0}, x.size() / 2, x.size() - 1}) {
      CheckFiniteDiff(&x.data()[i], gx.data()[i], eval);
    }
  }
  SUBCASE("nearest upsample") {
    nn::UpsampleNearestLayer up;
    Tensor y0 = up.Forward(x, true);
    CHECK(y0.h() == 12);
    CHECK(y0.w() == 14);
    std::vector<float> r = testutil::RandVec(y0.size(), 16, -1.0f, 1.0f);
    Tensor gy(y0.c(), y0.h(), y0.w());
    std::copy(r.begin(), r.end(), gy.data());
    Tensor gx = up.Backward(gy);
    auto eval = [&]() { return Project(up.Forward(x, false), r); };
    for (size_t i : {size_t{0}, x.size() / 2, x.size() - 1}) {
      CheckFiniteDiff(&x.data()[i], gx.data()[i], eval);
    }
  }
  SUBCASE("global average pool") {
    nn::GlobalAvgPoolLayer gap;
    Tensor y0 = gap.Forward(x, true);
    CHECK(y0.c() == 2);
    CHECK(y0.h() == 1);
    CHECK(y0.w() == 1);
    std::vector<float> r = testutil::RandVec(y0.size(), 17, -1.0f, 1.0f);
    Tensor gy(y0.c(), 1, 1);
    std::copy(r.begin(), r.end(), gy.data());
    Tensor gx = gap.Backward(gy);
    auto eval = [&]() { return Project(gap.Forward(x, false), r); };
    for (size_t i : {size_t{0}, x.size() - 1}) {
      CheckFiniteDiff(&x.data()[i], gx.data()[i], eval);
    }
  }
}

TEST_CASE("linear layer: gradients match finite differences") {
  Pcg32 rng(80);
  nn::LinearLayer fc;
  fc.Init(12, 5, rng);
  Tensor x(1, 1, 12);
  for (size_t i = 0; i < x.size(); ++i) {
    x.data()[i] = static_cast<float>(rng.Normal());
  }
  Tensor y0 = fc.Forward(x, true);
  std::vector<float> r = testutil::RandVec(y0.size(), 18, -1.0f, 1.0f);
  Tensor gy(1, 1, 5);
  std::copy(r.begin(), r.end(), gy.data());
  std::vector<nn::Param*> params;
  fc.CollectParams(params);
  for (auto* p : params) p->ZeroGrad();
  Tensor gx = fc.Backward(gy);
  auto eval = [&]() { return Project(fc.Forward(x, false), r); };
  for (size_t i : {size_t{0}, size_t{7}, size_t{11}}) {
    CheckFiniteDiff(&x.data()[i], gx.data()[i], eval);
  }
  CheckFiniteDiff(&params[0]->w[23], params[0]->g[23], eval);
  CheckFiniteDiff(&params[1]->w[4], params[1]->g[4], eval);
}

TEST_CASE("softmax cross entropy: known values and gradient identity") {
  Tensor logits(1, 1, 5);
  logits.Fill(0.7f);
  Tensor probs(1, 1, 5), dlogits(1, 1, 5);
  double loss = nn::SoftmaxCrossEntropy(logits, 2, &probs, &dlogits);
  // Uniform logits: loss = ln(5), probs = 1/5.
  CHECK(loss == doctest::Approx(std::log(5.0)).epsilon(1e-9));
  double psum = 0.0;
  for (int i = 0; i < 5; ++i) {
    CHECK(probs.data()[i] == doctest::Approx(0.2).epsilon(1e-6));
    psum += probs.data()[i];
  }
  CHECK(std::fabs(psum - 1.0) < 1e-5);
  // Gradient is probs - onehot.
  for (int i = 0; i < 5; ++i) {
    double expect = probs.data()[i] - (i == 2 ? 1.0 : 0.0);
    CHECK(dlogits.data()[i] == doctest::Approx(expect).epsilon(1e-6));
  }

  // Large logits stay finite (stability under shift).
  Tensor big(1, 1, 5);
  for (int i = 0; i < 5; ++i) big.data()[i] = 500.0f + i;
  double loss2 = nn::SoftmaxCrossEntropy(big, 4, &probs, nullptr);
  CHECK(std::isfinite(loss2));
  CHECK(loss2 < 1.0);

  CHECK_THROWS_AS(nn::SoftmaxCrossEntropy(big, 5, nullptr, nullptr),
                  ParameterError);
}

TEST_CASE("adam: moves parameters against the gradient") {
  nn::AdamConfig cfg;
  cfg.lr = 0.01f;
  nn::Adam opt(cfg);
  nn::Param p;
  p.Resize(4);
  for (int i = 0; i < 4; ++i) p.w[i] = 1.0f;
  std::vector<nn::Param*> params{&p};
  for (int step = 0; step < 10; ++step) {
    for (int i = 0; i < 4; ++i) p.g[i] = 2.0f * p.w[i];  // d/dw of w^2
    opt.Step(params);
  }
  CHECK(opt.step_count() == 10);
  for (int i = 0; i < 4; ++i) CHECK(p.w[i] < 1.0f);
  CHECK_THROWS_AS(opt.set_step_count(-1), ParameterError);
}

TEST_CASE("checkpoint blobs: round trip, version and magic rejection") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "rgbjnd_nn_test";
  fs::create_directories(dir);
  fs::path path = dir / "ckpt.bin";

  std::vector<float> a = testutil::RandVec(37, 1, -5.0f, 5.0f);
  std::vector<float> b = testutil::RandVec(1, 2, -5.0f, 5.0f);
  nn::SaveBlobs(path.string(), 3, {{"layer.w", &a}, {"opt.t", &b}});

  auto loaded = nn::LoadBlobs(path.string(), 3);
  REQUIRE(loaded.size() == 2);
  REQUIRE(loaded.at("layer.w").size() == a.size());
  CHECK(testutil::MaxAbsDiff(loaded.at("layer.w").data(), a.data(),
                             a.size()) == 0.0f);
  CHECK(loaded.at("opt.t")[0] == b[0]);

  CHECK_THROWS_AS(nn::LoadBlobs(path.string(), 4), DataError);

  fs::path junk = dir / "junk.bin";
  {
    std::vector<float> z{1.0f};
    nn::SaveBlobs(junk.string(), 1, {{"z", &z}});
    // Corrupt the magic in place.
    auto f = std::fopen(junk.string().c_str(), "r+b");
    REQUIRE(f != nullptr);
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(nn::LoadBlobs(junk.string(), 1), DataError);
  CHECK_THROWS_AS(nn::LoadBlobs((dir / "absent.bin").string(), 1), DataError);

  fs::remove_all(dir);
}

TEST_CASE("layer stack: strided encoder and upsampling decoder restore "
          "shape") {
  Pcg32 rng(81);
  nn::Conv3x3Layer c1, c2, c3;
  c1.Init(5, 8, 1, kern::PadMode::kReflect, rng);
  c2.Init(8, 12, 2, kern::PadMode::kReflect, rng);
  c3.Init(12, 3, 1, kern::PadMode::kReflect, rng);
  nn::LeakyReluLayer a1(0.2f), a2(0.2f);
  nn::UpsampleNearestLayer up;
  nn::ScaledTanhLayer out;

  Tensor x = testutil::RandImage(5, 16, 24, 3);
  Tensor h1 = a1.Forward(c1.Forward(x, true), true);
  Tensor h2 = a2.Forward(c2.Forward(h1, true), true);
  CHECK(h2.h() == 8);
  CHECK(h2.w() == 12);
  Tensor h3 = up.Forward(h2, true);
  Tensor y = out.Forward(c3.Forward(h3, true), true);
  CHECK(y.c() == 3);
  CHECK(y.h() == 16);
  CHECK(y.w() == 24);
  CHECK(testutil::MaxAbs(y.data(), y.size()) <= 0.5f);

  // Backward chain reaches the input with the right shape.
  Tensor gy(3, 16, 24);
  gy.Fill(1.0f);
  Tensor g = c1.Backward(
      a1.Backward(c2.Backward(a2.Backward(up.Backward(out.Backward(gy))))));

  // Wrong order of backward calls is wired to throw, not crash: reuse
  // after the chain ran is fine (caches persist), but a fresh layer
  // without a forward has no cache.
  nn::Conv3x3Layer fresh;
  Pcg32 rng2(82);
  fresh.Init(3, 3, 1, kern::PadMode::kZero, rng2);
  CHECK_THROWS_AS(fresh.Backward(gy), StateError);
  CHECK(g.c() == 5);
  CHECK(g.h() == 16);
  CHECK(g.w() == 24);
}

}  // namespace
}  // namespace rgbjnd
