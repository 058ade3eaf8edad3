// Copyright 2026 The fewseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace fewseg {

// Row-major 2D grid of scalar values.
template <typename T>
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(int r, int c, T fill = T{})
      : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}

  T& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  const T& at(int r, int c) const {
    return values[static_cast<std::size_t>(r) * cols + c];
  }
  std::size_t size() const { return values.size(); }
  bool same_shape(const Grid& o) const { return rows == o.rows && cols == o.cols; }

  friend bool operator==(const Grid&, const Grid&) = default;
};

// Binary foreground mask, values in {0, 1}.
using Mask = Grid<std::uint8_t>;
// Integer class or instance label map.
using LabelMap = Grid<std::int32_t>;

// 8-bit RGB image, interleaved.
struct RgbImage8 {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage8() = default;
  RgbImage8(int r, int c) : rows(r), cols(c), pixels(static_cast<std::size_t>(r) * c * 3) {}

  std::uint8_t* px(int r, int c) { return &pixels[(static_cast<std::size_t>(r) * cols + c) * 3]; }
  const std::uint8_t* px(int r, int c) const {
    return &pixels[(static_cast<std::size_t>(r) * cols + c) * 3];
  }

  friend bool operator==(const RgbImage8&, const RgbImage8&) = default;
};

// Planar RGB image with unit-interval float channels (R plane, G plane, B plane).
struct ColorImage {
  int rows = 0;
  int cols = 0;
  std::vector<float> planes;

  ColorImage() = default;
  ColorImage(int r, int c) : rows(r), cols(c), planes(static_cast<std::size_t>(r) * c * 3, 0.0f) {}

  std::size_t plane_size() const { return static_cast<std::size_t>(rows) * cols; }
  float& at(int channel, int r, int c) {
    return planes[channel * plane_size() + static_cast<std::size_t>(r) * cols + c];
  }
  float at(int channel, int r, int c) const {
    return planes[channel * plane_size() + static_cast<std::size_t>(r) * cols + c];
  }

  friend bool operator==(const ColorImage&, const ColorImage&) = default;
};

ColorImage to_float(const RgbImage8& image);
RgbImage8 to_rgb8(const ColorImage& image);

// Bilinear resize of an 8-bit image.
RgbImage8 resize_smooth(const RgbImage8& image, int rows, int cols);
// Nearest-neighbour resize; preserves the value set.
Grid<std::uint8_t> resize_nearest(const Grid<std::uint8_t>& grid, int rows, int cols);
LabelMap resize_nearest(const LabelMap& grid, int rows, int cols);

RgbImage8 read_rgb(const std::string& path);
// Single channel 8-bit read. Colour files are converted to grey.
Grid<std::uint8_t> read_gray(const std::string& path);
// Reads an integer label image (8- or 16-bit single channel).
LabelMap read_labels(const std::string& path);
Grid<std::uint16_t> read_gray16(const std::string& path);

void write_rgb(const std::string& path, const RgbImage8& image);
void write_gray(const std::string& path, const Grid<std::uint8_t>& grid);
void write_gray16(const std::string& path, const Grid<std::uint16_t>& grid);
// Writes labels as 8-bit when they fit, 16-bit otherwise.
void write_labels(const std::string& path, const LabelMap& labels);

}  // namespace fewseg
