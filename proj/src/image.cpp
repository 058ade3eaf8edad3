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

#include "fewseg/image.hpp"

#include <cmath>
#include <cstring>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fewseg/error.hpp"

namespace fewseg {
namespace {

cv::Mat decode(const std::string& path, int flags) {
  cv::Mat m = cv::imread(path, flags);
  if (m.empty()) throw IoError("unreadable", "cannot read image: " + path);
  return m;
}

void encode(const std::string& path, const cv::Mat& m) {
  bool ok = false;
  try {
    ok = cv::imwrite(path, m);
  } catch (const cv::Exception& e) {
    throw IoError("unwritable", "cannot write image " + path + ": " + e.what());
  }
  if (!ok) throw IoError("unwritable", "cannot write image: " + path);
}

template <typename T>
cv::Mat wrap(const Grid<T>& g, int type) {
  return cv::Mat(g.rows, g.cols, type, const_cast<T*>(g.values.data()));
}

template <typename T>
Grid<T> unwrap(const cv::Mat& m) {
  Grid<T> g(m.rows, m.cols);
  for (int r = 0; r < m.rows; ++r)
    std::memcpy(&g.at(r, 0), m.ptr<T>(r), sizeof(T) * m.cols);
  return g;
}

}  // namespace

ColorImage to_float(const RgbImage8& image) {
  ColorImage out(image.rows, image.cols);
  const std::size_t n = out.plane_size();
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c)
      out.planes[c * n + i] = image.pixels[i * 3 + c] / 255.0f;
  return out;
}

RgbImage8 to_rgb8(const ColorImage& image) {
  RgbImage8 out(image.rows, image.cols);
  const std::size_t n = image.plane_size();
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      float v = std::clamp(image.planes[c * n + i], 0.0f, 1.0f);
      out.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return out;
}

RgbImage8 resize_smooth(const RgbImage8& image, int rows, int cols) {
  if (image.rows == rows && image.cols == cols) return image;
  cv::Mat src(image.rows, image.cols, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(cols, rows), 0, 0, cv::INTER_LINEAR);
  RgbImage8 out(rows, cols);
  for (int r = 0; r < rows; ++r) std::memcpy(out.px(r, 0), dst.ptr<std::uint8_t>(r), 3 * cols);
  return out;
}

Grid<std::uint8_t> resize_nearest(const Grid<std::uint8_t>& grid, int rows, int cols) {
  if (grid.rows == rows && grid.cols == cols) return grid;
  cv::Mat dst;
  cv::resize(wrap(grid, CV_8UC1), dst, cv::Size(cols, rows), 0, 0, cv::INTER_NEAREST);
  return unwrap<std::uint8_t>(dst);
}

LabelMap resize_nearest(const LabelMap& grid, int rows, int cols) {
  if (grid.rows == rows && grid.cols == cols) return grid;
  cv::Mat dst;
  cv::resize(wrap(grid, CV_32SC1), dst, cv::Size(cols, rows), 0, 0, cv::INTER_NEAREST);
  return unwrap<std::int32_t>(dst);
}

RgbImage8 read_rgb(const std::string& path) {
  cv::Mat bgr = decode(path, cv::IMREAD_COLOR);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage8 out(rgb.rows, rgb.cols);
  for (int r = 0; r < rgb.rows; ++r) std::memcpy(out.px(r, 0), rgb.ptr<std::uint8_t>(r), 3 * rgb.cols);
  return out;
}

Grid<std::uint8_t> read_gray(const std::string& path) {
  return unwrap<std::uint8_t>(decode(path, cv::IMREAD_GRAYSCALE));
}

Grid<std::uint16_t> read_gray16(const std::string& path) {
  cv::Mat m = decode(path, cv::IMREAD_UNCHANGED);
  if (m.channels() != 1) throw IoError("unreadable", "expected single channel image: " + path);
  if (m.depth() != CV_16U) m.convertTo(m, CV_16U);
  return unwrap<std::uint16_t>(m);
}

LabelMap read_labels(const std::string& path) {
  cv::Mat m = decode(path, cv::IMREAD_UNCHANGED);
  if (m.channels() != 1) throw IoError("unreadable", "expected single channel label image: " + path);
  m.convertTo(m, CV_32S);
  return unwrap<std::int32_t>(m);
}

void write_rgb(const std::string& path, const RgbImage8& image) {
  cv::Mat rgb(image.rows, image.cols, CV_8UC3, const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  encode(path, bgr);
}

void write_gray(const std::string& path, const Grid<std::uint8_t>& grid) {
  encode(path, wrap(grid, CV_8UC1));
}

void write_gray16(const std::string& path, const Grid<std::uint16_t>& grid) {
  encode(path, wrap(grid, CV_16UC1));
}

void write_labels(const std::string& path, const LabelMap& labels) {
  int lo = 0, hi = 0;
  for (auto v : labels.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo < 0 || hi > 65535) throw InvalidArgument("label-range", "labels must fit in 16 bits");
  cv::Mat m;
  wrap(labels, CV_32SC1).convertTo(m, hi <= 255 ? CV_8U : CV_16U);
  encode(path, m);
}

}  // namespace fewseg
