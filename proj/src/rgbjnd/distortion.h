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

// Seventeen-entry distortion catalog, the five-way grouping on top of it,
// a synthetic labeled-corpus builder, and the distortion-group classifier.
//
// Generators are pure functions of (image, level, seed): no hidden state,
// bit-identical reruns. Output always has the input's shape and stays in
// [0, 1]. The severity grids used for corpus building are mirrored in
// manifest.json under "distortion"; a unit test keeps the two in sync.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rgbjnd/tensor.h"

namespace rgbjnd {
namespace distortion {

inline constexpr int kNumTypes = 17;
inline constexpr int kNumGroups = 5;
inline constexpr uint32_t kClassifierCheckpointVersion = 1;

// Catalog index plus the generator's own severity parameter. Level
// semantics are per type (noise sigma, blur sigma, codec quality, shift,
// ...); LevelRangeOf documents the valid interval.
struct DistortionType {
  int index = 1;
  double level = 0.0;
};

struct LevelRange {
  double lo = 0.0;
  double hi = 0.0;
  // The most transparent in-range level; generators are property-tested
  // to stay within PSNR >= 50 dB of the input here. For the
  // quality-parameterized coders this is the top of the range.
  double minimal = 0.0;
};

// Catalog lookups. ParameterError outside 1..17.
const char* TypeName(int index);
int GroupOf(int index);
LevelRange LevelRangeOf(int index);
// Five severities per type, used by the corpus builder. Mirrored in the
// manifest; treat as versioned data, not tunables.
const std::array<double, 5>& LevelGridOf(int index);

// Applies one catalog entry. Level 0 is the identity for every generator
// whose range includes it; quality-parameterized coders (types 10, 11)
// reject 0 as out of range. Requires a (3, h, w) input with min side >= 8.
// Types 12 and 13 synthesize transport loss as block dropouts with
// ringing, not as real bitstream corruption.
Tensor ApplyDistortion(const Tensor& o, const DistortionType& t,
                       uint64_t seed = 0x5eedULL);

// One corpus entry. For synthetic items `level` is the generator level;
// for ingested datasets it records the dataset's own severity column.
struct LabeledImage {
  Tensor image;
  int group = 0;
  int type = 0;
  double level = 0.0;
  int source_id = -1;  // split key: holdout is by source, never by variant
};

struct CorpusConfig {
  int per_group = 50;
  uint64_t seed = 1;
};

// Deterministic stand-in sources: multi-octave textures with a shared
// luminance placement (mean near 0.5), so intensity-level distortions
// remain detectable without a reference. Min side 8.
std::vector<Tensor> ProceduralSources(int count, int h, int w, uint64_t seed);

// Balanced synthetic corpus: per group, types are drawn uniformly from
// the group and levels uniformly from the manifest grid. Sources must all
// be at least 64x64 (the classifier's input floor).
std::vector<LabeledImage> BuildSyntheticCorpus(
    const std::vector<Tensor>& sources, const CorpusConfig& cfg);

// Ingests a TID2008-style tree:
//   <dir>/distorted_images/iSS_TT_L.<bmp|png>   (case-insensitive)
// with SS the source id, TT the catalog type 01..17, L the dataset's
// severity digit. Files that do not match (including types outside the
// catalog) are skipped; an empty result is a DataError. Entries are
// sorted by filename.
std::vector<LabeledImage> LoadTidCorpus(const std::string& dir);

struct ClassifierConfig {
  int epochs = 20;
  float lr = 1e-4f;
  int batch = 16;
  int crop = 176;  // center crop side; smaller images pass through whole
  double holdout_fraction = 0.2;
  uint64_t seed = 7;
};

struct ClassifierReport {
  double holdout_accuracy = 0.0;
  int train_count = 0;
  int holdout_count = 0;
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
};

// Index of the largest value; ties resolve to the smallest index. The
// classifier's group decision goes through this exact function.
int ArgmaxSmallest(const double* p, int n);

// Five-way distortion-group classifier: strided conv stem, three residual
// stages (64/128/256), global average pooling concatenated with the
// input's per-channel mean and spread so intensity-level distortions stay
// visible after normalization, and a linear head.
//
// Lifecycle: construct (unfrozen, random init), TrainClassifier (trains
// and freezes), Classify (frozen only). Frozen models never mutate;
// inference is reentrant.
class ClassifierModel {
 public:
  explicit ClassifierModel(uint64_t init_seed = 0x1dc1a5ULL);
  ~ClassifierModel();
  ClassifierModel(ClassifierModel&&) noexcept;
  ClassifierModel& operator=(ClassifierModel&&) noexcept;
  ClassifierModel(const ClassifierModel&) = delete;
  ClassifierModel& operator=(const ClassifierModel&) = delete;

  bool frozen() const;

  // Group 1..5 for a distorted image; fills softmax probabilities when
  // `probs` is given (they sum to 1 within 1e-5). StateError unless
  // frozen. Center-crops to the training crop when the image is larger.
  int Classify(const Tensor& d, std::array<double, 5>* probs = nullptr) const;

  // Checkpoints carry an architecture tag; Load rejects mismatches with a
  // DataError. Only frozen models are deployable artifacts.
  void Save(const std::string& path) const;
  static ClassifierModel Load(const std::string& path);

 private:
  friend ClassifierReport TrainClassifier(ClassifierModel& model,
                                          const std::vector<LabeledImage>& data,
                                          const ClassifierConfig& cfg);
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Trains with cross-entropy and freezes the model. The holdout split is
// by source image, never by distorted variant. Preconditions: unfrozen
// model, non-empty data, at least two distinct groups and two distinct
// sources, every image at least 64x64.
ClassifierReport TrainClassifier(ClassifierModel& model,
                                 const std::vector<LabeledImage>& data,
                                 const ClassifierConfig& cfg);

}  // namespace distortion
}  // namespace rgbjnd
