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

// File formats:
//   - 8-bit RGB PNG and 24-bit uncompressed BMP for images (values / 255)
//   - 16-bit grayscale PNG for single-channel maps (values / 65535)
//   - raw float maps: magic "RJND" (3 channels) or "RSAL" (1 channel),
//     then uint32 h, uint32 w (little-endian), then c*h*w float32
//     little-endian in channel-major order. Bit-exact round trip.

#include <string>

#include "rgbjnd/tensor.h"

namespace rgbjnd {

// Loads a PNG or BMP (chosen by extension, case-insensitive) as a
// (3, h, w) tensor in [0, 1]. Grayscale and paletted PNGs are expanded to
// RGB; an alpha channel is dropped.
Tensor LoadImageFile(const std::string& path);

// Saves a (3, h, w) tensor as 8-bit RGB. Values are clamped to [0, 1]
// and quantized with round-to-nearest.
void SaveImagePng(const Tensor& img, const std::string& path);
void SaveImageBmp(const Tensor& img, const std::string& path);

// 16-bit grayscale PNG <-> (1, h, w) tensor in [0, 1].
Tensor LoadGray16Png(const std::string& path);
void SaveGray16Png(const Tensor& map, const std::string& path);

// Raw float container described above; c must be 1 or 3 on save.
Tensor LoadRawFloat(const std::string& path);
void SaveRawFloat(const Tensor& t, const std::string& path);

}  // namespace rgbjnd
