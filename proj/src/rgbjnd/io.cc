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

#include "rgbjnd/io.h"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

#include "rgbjnd/base.h"

namespace rgbjnd {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr OpenFile(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw DataError("cannot open '" + path + "'");
  }
  return f;
}

std::string LowerExt(const std::string& path) {
  size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string ext = path.substr(dot + 1);
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext;
}

uint8_t QuantizeByte(float v) {
  float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<uint8_t>(std::lround(c * 255.0f));
}

uint16_t QuantizeU16(float v) {
  float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<uint16_t>(std::lround(c * 65535.0f));
}

void WriteU32Le(std::FILE* f, uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16),
                  static_cast<uint8_t>(v >> 24)};
  std::fwrite(b, 1, 4, f);
}

uint32_t ReadU32Le(std::FILE* f, const std::string& path) {
  uint8_t b[4];
  if (std::fread(b, 1, 4, f) != 4) {
    throw DataError("truncated file '" + path + "'");
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

// libpng longjmp-based error handling: every Load/Save wraps the png
// structs so cleanup happens on both paths.

Tensor LoadPngRgb(const std::string& path) {
  FilePtr f = OpenFile(path, "rb");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed");
  }
  std::vector<uint8_t> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed to decode PNG '" + path + "'");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
  }
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
    png_set_gray_to_rgb(png);
  }
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  pixels.resize(static_cast<size_t>(h) * w * 3);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = pixels.data() + static_cast<size_t>(y) * w * 3;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out(3, static_cast<int>(h), static_cast<int>(w));
  size_t plane = static_cast<size_t>(h) * w;
  for (size_t i = 0; i < plane; ++i) {
    out.data()[i] = pixels[i * 3] / 255.0f;
    out.data()[plane + i] = pixels[i * 3 + 1] / 255.0f;
    out.data()[2 * plane + i] = pixels[i * 3 + 2] / 255.0f;
  }
  return out;
}

Tensor LoadBmpRgb(const std::string& path) {
  FilePtr f = OpenFile(path, "rb");
  uint8_t header[54];
  if (std::fread(header, 1, 54, f.get()) != 54 || header[0] != 'B' ||
      header[1] != 'M') {
    throw DataError("not a BMP file: '" + path + "'");
  }
  auto u32 = [&](int off) {
    return static_cast<uint32_t>(header[off]) |
           (static_cast<uint32_t>(header[off + 1]) << 8) |
           (static_cast<uint32_t>(header[off + 2]) << 16) |
           (static_cast<uint32_t>(header[off + 3]) << 24);
  };
  uint32_t data_offset = u32(10);
  int32_t w = static_cast<int32_t>(u32(18));
  int32_t h = static_cast<int32_t>(u32(22));
  uint16_t bpp = static_cast<uint16_t>(header[28] | (header[29] << 8));
  uint32_t compression = u32(30);
  if (bpp != 24 || compression != 0) {
    throw DataError("only 24-bit uncompressed BMP supported: '" + path + "'");
  }
  bool top_down = h < 0;
  int ah = std::abs(h);
  if (w <= 0 || ah <= 0) throw DataError("bad BMP dims in '" + path + "'");
  if (std::fseek(f.get(), static_cast<long>(data_offset), SEEK_SET) != 0) {
    throw DataError("truncated BMP '" + path + "'");
  }
  size_t row_bytes = (static_cast<size_t>(w) * 3 + 3) & ~size_t{3};
  std::vector<uint8_t> row(row_bytes);
  Tensor out(3, ah, w);
  size_t plane = static_cast<size_t>(ah) * w;
  for (int yy = 0; yy < ah; ++yy) {
    if (std::fread(row.data(), 1, row_bytes, f.get()) != row_bytes) {
      throw DataError("truncated BMP '" + path + "'");
    }
    int y = top_down ? yy : ah - 1 - yy;
    for (int x = 0; x < w; ++x) {
      // BMP stores BGR.
      out.data()[static_cast<size_t>(y) * w + x] = row[x * 3 + 2] / 255.0f;
      out.data()[plane + static_cast<size_t>(y) * w + x] =
          row[x * 3 + 1] / 255.0f;
      out.data()[2 * plane + static_cast<size_t>(y) * w + x] =
          row[x * 3] / 255.0f;
    }
  }
  return out;
}

}  // namespace

Tensor LoadImageFile(const std::string& path) {
  std::string ext = LowerExt(path);
  if (ext == "png") return LoadPngRgb(path);
  if (ext == "bmp") return LoadBmpRgb(path);
  throw DataError("unsupported image extension '" + ext + "' for '" + path +
                  "' (png and bmp are supported)");
}

void SaveImagePng(const Tensor& img, const std::string& path) {
  if (img.c() != 3) {
    throw DimensionError("SaveImagePng: expected (3, h, w), got " +
                         img.ShapeStr());
  }
  FilePtr f = OpenFile(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng init failed");
  }
  std::vector<uint8_t> rowbuf;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to encode PNG '" + path + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, img.w(), img.h(), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  rowbuf.resize(static_cast<size_t>(img.w()) * 3);
  size_t plane = static_cast<size_t>(img.h()) * img.w();
  for (int y = 0; y < img.h(); ++y) {
    for (int x = 0; x < img.w(); ++x) {
      size_t i = static_cast<size_t>(y) * img.w() + x;
      rowbuf[x * 3] = QuantizeByte(img.data()[i]);
      rowbuf[x * 3 + 1] = QuantizeByte(img.data()[plane + i]);
      rowbuf[x * 3 + 2] = QuantizeByte(img.data()[2 * plane + i]);
    }
    png_write_row(png, rowbuf.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void SaveImageBmp(const Tensor& img, const std::string& path) {
  if (img.c() != 3) {
    throw DimensionError("SaveImageBmp: expected (3, h, w), got " +
                         img.ShapeStr());
  }
  FilePtr f = OpenFile(path, "wb");
  int w = img.w(), h = img.h();
  size_t row_bytes = (static_cast<size_t>(w) * 3 + 3) & ~size_t{3};
  uint32_t data_size = static_cast<uint32_t>(row_bytes * h);
  uint32_t file_size = 54 + data_size;
  uint8_t header[54] = {0};
  header[0] = 'B';
  header[1] = 'M';
  auto put32 = [&](int off, uint32_t v) {
    header[off] = static_cast<uint8_t>(v);
    header[off + 1] = static_cast<uint8_t>(v >> 8);
    header[off + 2] = static_cast<uint8_t>(v >> 16);
    header[off + 3] = static_cast<uint8_t>(v >> 24);
  };
  put32(2, file_size);
  put32(10, 54);
  put32(14, 40);
  put32(18, static_cast<uint32_t>(w));
  put32(22, static_cast<uint32_t>(h));
  header[26] = 1;
  header[28] = 24;
  put32(34, data_size);
  put32(38, 2835);  // 72 dpi
  put32(42, 2835);
  std::fwrite(header, 1, 54, f.get());
  std::vector<uint8_t> row(row_bytes, 0);
  size_t plane = static_cast<size_t>(h) * w;
  for (int yy = h - 1; yy >= 0; --yy) {
    for (int x = 0; x < w; ++x) {
      size_t i = static_cast<size_t>(yy) * w + x;
      row[x * 3] = QuantizeByte(img.data()[2 * plane + i]);
      row[x * 3 + 1] = QuantizeByte(img.data()[plane + i]);
      row[x * 3 + 2] = QuantizeByte(img.data()[i]);
    }
    std::fwrite(row.data(), 1, row_bytes, f.get());
  }
}

Tensor LoadGray16Png(const std::string& path) {
  FilePtr f = OpenFile(path, "rb");
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DataError("libpng init failed");
  }
  std::vector<uint8_t> pixels;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("failed to decode PNG '" + path + "'");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DataError("expected grayscale PNG: '" + path + "'");
  }
  if (depth < 16) {
    // 8-bit maps are accepted; scaled as v/255.
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    pixels.resize(static_cast<size_t>(h) * w);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) {
      rows[y] = pixels.data() + static_cast<size_t>(y) * w;
    }
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    Tensor out(1, static_cast<int>(h), static_cast<int>(w));
    for (size_t i = 0; i < out.size(); ++i) out.data()[i] = pixels[i] / 255.0f;
    return out;
  }
  png_read_update_info(png, info);
  pixels.resize(static_cast<size_t>(h) * w * 2);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) {
    rows[y] = pixels.data() + static_cast<size_t>(y) * w * 2;
  }
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);
  Tensor out(1, static_cast<int>(h), static_cast<int>(w));
  for (size_t i = 0; i < out.size(); ++i) {
    // PNG 16-bit samples are big-endian.
    uint16_t v = static_cast<uint16_t>((pixels[i * 2] << 8) | pixels[i * 2 + 1]);
    out.data()[i] = v / 65535.0f;
  }
  return out;
}

void SaveGray16Png(const Tensor& map, const std::string& path) {
  if (map.c() != 1) {
    throw DimensionError("SaveGray16Png: expected (1, h, w), got " +
                         map.ShapeStr());
  }
  FilePtr f = OpenFile(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            nullptr, nullptr);
  if (!png) throw DataError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng init failed");
  }
  std::vector<uint8_t> rowbuf;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("failed to encode PNG '" + path + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, map.w(), map.h(), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  rowbuf.resize(static_cast<size_t>(map.w()) * 2);
  for (int y = 0; y < map.h(); ++y) {
    for (int x = 0; x < map.w(); ++x) {
      uint16_t v = QuantizeU16(map.At(0, y, x));
      rowbuf[x * 2] = static_cast<uint8_t>(v >> 8);
      rowbuf[x * 2 + 1] = static_cast<uint8_t>(v);
    }
    png_write_row(png, rowbuf.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Tensor LoadRawFloat(const std::string& path) {
  FilePtr f = OpenFile(path, "rb");
  char magic[4];
  if (std::fread(magic, 1, 4, f.get()) != 4) {
    throw DataError("truncated file '" + path + "'");
  }
  int c;
  if (std::memcmp(magic, "RJND", 4) == 0) {
    c = 3;
  } else if (std::memcmp(magic, "RSAL", 4) == 0) {
    c = 1;
  } else {
    throw DataError("unknown raw-float magic in '" + path + "'");
  }
  uint32_t h = ReadU32Le(f.get(), path);
  uint32_t w = ReadU32Le(f.get(), path);
  if (h == 0 || w == 0 || h > 1u << 20 || w > 1u << 20) {
    throw DataError("implausible dimensions in '" + path + "'");
  }
  Tensor out(c, static_cast<int>(h), static_cast<int>(w));
  size_t n = out.size();
  static_assert(sizeof(float) == 4);
  if (std::fread(out.data(), sizeof(float), n, f.get()) != n) {
    throw DataError("truncated payload in '" + path + "'");
  }
  return out;
}

void SaveRawFloat(const Tensor& t, const std::string& path) {
  const char* magic;
  if (t.c() == 3) {
    magic = "RJND";
  } else if (t.c() == 1) {
    magic = "RSAL";
  } else {
    throw DimensionError("SaveRawFloat: expected 1 or 3 channels, got " +
                         t.ShapeStr());
  }
  FilePtr f = OpenFile(path, "wb");
  std::fwrite(magic, 1, 4, f.get());
  WriteU32Le(f.get(), static_cast<uint32_t>(t.h()));
  WriteU32Le(f.get(), static_cast<uint32_t>(t.w()));
  if (std::fwrite(t.data(), sizeof(float), t.size(), f.get()) != t.size()) {
    throw DataError("short write to '" + path + "'");
  }
}

}  // namespace rgbjnd
