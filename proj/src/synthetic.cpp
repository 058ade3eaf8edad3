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

#include "fewseg/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include <opencv2/imgproc.hpp>

#include "fewseg/error.hpp"

namespace fs = std::filesystem;

namespace fewseg {
namespace {

constexpr const char* kShapeNames[] = {"circle", "square", "triangle", "ring", "cross"};
constexpr const char* kFillNames[] = {"solid", "stripes", "checker", "dots"};

struct Rgb {
  double r, g, b;
};

Rgb hue_color(double hue, double saturation, double value) {
  double h = std::fmod(hue, 1.0) * 6.0;
  int sector = static_cast<int>(h) % 6;
  double f = h - std::floor(h);
  double p = value * (1 - saturation), q = value * (1 - saturation * f), t = value * (1 - saturation * (1 - f));
  switch (sector) {
    case 0: return {value, t, p};
    case 1: return {q, value, p};
    case 2: return {p, value, t};
    case 3: return {p, q, value};
    case 4: return {t, p, value};
    default: return {value, p, q};
  }
}

std::vector<cv::Point> rotated(std::vector<cv::Point2d> pts, cv::Point2d centre, double angle) {
  std::vector<cv::Point> out;
  const double c = std::cos(angle), s = std::sin(angle);
  for (const auto& p : pts)
    out.emplace_back(static_cast<int>(std::lround(centre.x + c * p.x - s * p.y)),
                     static_cast<int>(std::lround(centre.y + s * p.x + c * p.y)));
  return out;
}

// Draws the silhouette of `shape` (value 255) into `canvas`.
void draw_shape(cv::Mat& canvas, ShapeKind shape, cv::Point2d centre, double radius, double angle) {
  const cv::Scalar on(255);
  const cv::Point c(static_cast<int>(std::lround(centre.x)), static_cast<int>(std::lround(centre.y)));
  const int r = static_cast<int>(std::lround(radius));
  switch (shape) {
    case ShapeKind::circle:
      cv::circle(canvas, c, r, on, cv::FILLED, cv::LINE_8);
      break;
    case ShapeKind::ring:
      cv::circle(canvas, c, r, on, cv::FILLED, cv::LINE_8);
      cv::circle(canvas, c, static_cast<int>(std::lround(radius * 0.55)), cv::Scalar(0), cv::FILLED, cv::LINE_8);
      break;
    case ShapeKind::square: {
      double h = radius * 0.85;
      auto poly = rotated({{-h, -h}, {h, -h}, {h, h}, {-h, h}}, centre, angle);
      cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{poly}, on, cv::LINE_8);
      break;
    }
    case ShapeKind::triangle: {
      std::vector<cv::Point2d> pts;
      for (int i = 0; i < 3; ++i) {
        double a = -std::numbers::pi / 2 + i * 2 * std::numbers::pi / 3;
        pts.push_back({radius * std::cos(a), radius * std::sin(a)});
      }
      auto poly = rotated(pts, centre, angle);
      cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{poly}, on, cv::LINE_8);
      break;
    }
    case ShapeKind::cross: {
      double a = radius, b = radius * 0.33;
      auto poly = rotated({{-b, -a}, {b, -a}, {b, -b}, {a, -b}, {a, b}, {b, b},
                           {b, a}, {-b, a}, {-b, b}, {-a, b}, {-a, -b}, {-b, -b}},
                          centre, angle);
      cv::fillPoly(canvas, std::vector<std::vector<cv::Point>>{poly}, on, cv::LINE_8);
      break;
    }
  }
}

bool fill_on(FillStyle fill, int r, int c, int period, double angle) {
  const double u = c * std::cos(angle) + r * std::sin(angle);
  const double v = -c * std::sin(angle) + r * std::cos(angle);
  switch (fill) {
    case FillStyle::solid: return true;
    case FillStyle::stripes: return static_cast<long>(std::floor(u / period)) % 2 == 0;
    case FillStyle::checker:
      return (static_cast<long>(std::floor(u / period)) + static_cast<long>(std::floor(v / period))) % 2 == 0;
    case FillStyle::dots: {
      double du = u - (std::floor(u / period) + 0.5) * period;
      double dv = v - (std::floor(v / period) + 0.5) * period;
      return du * du + dv * dv > 0.1 * period * period;
    }
  }
  return true;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L)); }

}  // namespace

SyntheticClass synthetic_class(int index) {
  if (index < 0) throw InvalidArgument("class-index", "negative synthetic class index");
  SyntheticClass c;
  c.shape = static_cast<ShapeKind>(index % kShapeKinds);
  c.style_index = index / kShapeKinds;
  c.fill = static_cast<FillStyle>(c.style_index % kFillStyles);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%s-%03d", kShapeNames[index % kShapeKinds],
                kFillNames[c.style_index % kFillStyles], c.style_index);
  c.name = buf;
  return c;
}

std::string superclass_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "group-%02d", index);
  return buf;
}

ImageMaskPair render_synthetic_pair(const SyntheticClass& cls, std::uint64_t seed, int image_index,
                                    double distractor_probability) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(cls.style_index), static_cast<std::uint32_t>(cls.shape),
                    static_cast<std::uint32_t>(image_index)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int side = kImageSide;

  // Textured background: a random base colour modulated by two oriented waves.
  Rgb base = hue_color(unit(rng), 0.2 + 0.5 * unit(rng), 0.3 + 0.5 * unit(rng));
  Rgb tint = hue_color(unit(rng), 0.6, 0.8);
  const double f1 = 0.02 + 0.08 * unit(rng), f2 = 0.02 + 0.08 * unit(rng);
  const double a1 = unit(rng) * std::numbers::pi, a2 = unit(rng) * std::numbers::pi;
  const double ph1 = unit(rng) * 6.28, ph2 = unit(rng) * 6.28;
  const double amp = 0.1 + 0.15 * unit(rng);

  RgbImage8 image(side, side);
  std::uniform_real_distribution<double> noise(-0.04, 0.04);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      double w = std::sin(f1 * (c * std::cos(a1) + r * std::sin(a1)) + ph1) +
                 0.5 * std::sin(f2 * (c * std::cos(a2) + r * std::sin(a2)) + ph2);
      auto* px = image.px(r, c);
      px[0] = to_byte(base.r + amp * w * tint.r + noise(rng));
      px[1] = to_byte(base.g + amp * w * tint.g + noise(rng));
      px[2] = to_byte(base.b + amp * w * tint.b + noise(rng));
    }

  // Class appearance: golden-ratio hue walk over the style index, small per-image jitter.
  const double hue = std::fmod(cls.style_index * 0.618033988749895 + 0.05 * (unit(rng) - 0.5) + 1.0, 1.0);
  Rgb fg = hue_color(hue, 0.75 + 0.2 * unit(rng), 0.75 + 0.2 * unit(rng));
  Rgb fg2 = {fg.r * 0.35, fg.g * 0.35, fg.b * 0.35};
  const int period = 6 + (cls.style_index / kFillStyles) % 5;
  const double fill_angle = (cls.style_index % 3) * std::numbers::pi / 4;

  auto paint = [&](const cv::Mat& silhouette, FillStyle fill, Rgb on, Rgb off) {
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c)
        if (silhouette.at<std::uint8_t>(r, c)) {
          Rgb col = fill_on(fill, r, c, period, fill_angle) ? on : off;
          auto* px = image.px(r, c);
          px[0] = to_byte(col.r + noise(rng) * 0.5);
          px[1] = to_byte(col.g + noise(rng) * 0.5);
          px[2] = to_byte(col.b + noise(rng) * 0.5);
        }
  };

  const double radius = 28 + 42 * unit(rng);
  const double margin = radius + 2;
  cv::Point2d centre(margin + unit(rng) * (side - 2 * margin), margin + unit(rng) * (side - 2 * margin));
  const double angle = unit(rng) * 2 * std::numbers::pi;

  cv::Mat silhouette = cv::Mat::zeros(side, side, CV_8UC1);
  draw_shape(silhouette, cls.shape, centre, radius, angle);

  if (unit(rng) < distractor_probability) {
    // Distractor of a different kind, painted first so the target stays on top.
    int kind = (static_cast<int>(cls.shape) + 1 + static_cast<int>(unit(rng) * (kShapeKinds - 1))) % kShapeKinds;
    double dr = 20 + 25 * unit(rng);
    cv::Point2d dc(dr + 2 + unit(rng) * (side - 2 * dr - 4), dr + 2 + unit(rng) * (side - 2 * dr - 4));
    cv::Mat other = cv::Mat::zeros(side, side, CV_8UC1);
    draw_shape(other, static_cast<ShapeKind>(kind), dc, dr, unit(rng) * 2 * std::numbers::pi);
    Rgb dcol = hue_color(unit(rng), 0.8, 0.9);
    paint(other, static_cast<FillStyle>(static_cast<int>(unit(rng) * kFillStyles) % kFillStyles), dcol, {dcol.r * 0.35, dcol.g * 0.35, dcol.b * 0.35});
  }
  paint(silhouette, cls.fill, fg, fg2);

  ImageMaskPair pair;
  pair.image = to_float(image);
  pair.mask = Mask(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) pair.mask.at(r, c) = silhouette.at<std::uint8_t>(r, c) ? 1 : 0;
  pair.source_path = cls.name + "/" + std::to_string(image_index + 1);
  return pair;
}

DatasetRegistry build_synthetic_dataset(const SyntheticOptions& options, const std::string& out_path) {
  if (options.n_classes < 2) throw InvalidArgument("n-classes", "synthetic dataset needs at least 2 classes");
  if (options.images_per_class < 1) throw InvalidArgument("images-per-class", "need at least one image per class");
  std::error_code ec;
  fs::create_directories(out_path, ec);
  if (ec || !fs::is_directory(out_path)) throw IoError("unwritable", "cannot create output directory: " + out_path);

  const int n_super = std::min(options.n_classes, kTopLevelClasses);
  HierarchyGraph hierarchy;
  for (int s = 0; s < n_super; ++s) hierarchy.add_node(superclass_name(s), Level::top);
  for (int i = 0; i < options.n_classes; ++i) {
    SyntheticClass cls = synthetic_class(i);
    hierarchy.add_node(cls.name, Level::bottom, {superclass_name(i % n_super)});
    fs::path dir = fs::path(out_path) / cls.name;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("unwritable", "cannot create " + dir.string());
    for (int k = 0; k < options.images_per_class; ++k) {
      ImageMaskPair pair = render_synthetic_pair(cls, options.seed, k, options.distractor_probability);
      std::string stem = std::to_string(k + 1);
      write_pair(pair, (dir / (stem + ".jpg")).string(), (dir / (stem + ".png")).string());
    }
  }
  hierarchy.save_json((fs::path(out_path) / "hierarchy.json").string());
  return DatasetRegistry::open(out_path);
}

}  // namespace fewseg
