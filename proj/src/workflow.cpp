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

#include "fewseg/workflow.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "fewseg/error.hpp"

namespace fs = std::filesystem;

namespace fewseg {

std::string to_string(Provenance p) { return p == Provenance::initial ? "initial" : "corrected"; }

Provenance parse_provenance(const std::string& text) {
  if (text == "initial") return Provenance::initial;
  if (text == "corrected") return Provenance::corrected;
  throw InvalidArgument("provenance", "unknown provenance tag: " + text);
}

namespace {

void check_pair(const ImageMaskPair& pair) {
  if (pair.image.rows != kImageSide || pair.image.cols != kImageSide || !pair.mask.same_shape(Mask(kImageSide, kImageSide)))
    throw DataError("mask-size-mismatch", "pair is not at working resolution: " + pair.source_path);
  bool any = false;
  for (auto v : pair.mask.values) {
    if (v > 1) throw DataError("mask-nonbinary", "mask is not binary: " + pair.source_path);
    any = any || v;
  }
  if (!any) throw DataError("mask-empty", "all-background mask: " + pair.source_path);
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".bmp";
}

}  // namespace

SupportSet SupportSet::initial(std::vector<ImageMaskPair> pairs) {
  SupportSet s;
  s.provenance.assign(pairs.size(), Provenance::initial);
  s.pairs = std::move(pairs);
  s.check();
  return s;
}

void SupportSet::check() const {
  if (pairs.empty()) throw InvalidArgument("empty-support", "support set needs at least one pair");
  if (provenance.size() != pairs.size()) throw InvalidArgument("support-provenance", "one provenance tag per pair");
  if (version < 1) throw InvalidArgument("support-version", "versions start at 1");
}

void save_support_manifest(const SupportSet& set, const std::vector<std::string>& mask_paths,
                           const std::string& path) {
  set.check();
  if (mask_paths.size() != set.pairs.size()) throw InvalidArgument("support-manifest", "one mask path per pair");
  std::ofstream out(path);
  if (!out) throw IoError("unwritable", "cannot write " + path);
  out << "# version\t" << set.version << '\n';
  for (std::size_t i = 0; i < set.pairs.size(); ++i)
    out << to_string(set.provenance[i]) << '\t' << set.pairs[i].source_path << '\t' << mask_paths[i] << '\n';
}

SupportSet load_support_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing-file", "cannot read support manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q.string() : (base / q).string();
  };
  SupportSet set;
  std::string line;
  bool have_version = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ls(line.substr(1));
      std::string key;
      int v = 0;
      if (ls >> key >> v && key == "version") {
        set.version = v;
        have_version = true;
      }
      continue;
    }
    std::istringstream ls(line);
    std::string tag, image, mask;
    if (!std::getline(ls, tag, '\t') || !std::getline(ls, image, '\t') || !std::getline(ls, mask))
      throw DataError("support-manifest", "malformed line in " + path + ": " + line);
    ImageMaskPair pair = load_pair(resolve(image), resolve(mask));
    pair.source_path = fs::weakly_canonical(resolve(image)).string();
    set.pairs.push_back(std::move(pair));
    set.provenance.push_back(parse_provenance(tag));
  }
  if (!have_version) throw DataError("support-manifest", "missing version line in " + path);
  set.check();
  return set;
}

CorpusImage load_corpus_image(const std::string& path) {
  if (!fs::exists(path)) throw IoError("missing-file", "image not found: " + path);
  RgbImage8 raw = read_rgb(path);
  ImageCheck check = validate_image(raw.cols, raw.rows);
  if (!check.accepted) throw DataError(check.rule_id(), path + " rejected by " + check.rule_id());
  return {path, to_float(resize_smooth(raw, kImageSide, kImageSide))};
}

std::vector<CorpusImage> load_corpus_dir(const std::string& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("unreadable-root", "not a readable directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  std::vector<CorpusImage> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(load_corpus_image(p));
  return out;
}

RgbImage8 red_overlay(const ColorImage& image, const Mask& mask) {
  if (image.rows != mask.rows || image.cols != mask.cols)
    throw InvalidArgument("shape-mismatch", "overlay mask does not match the image");
  RgbImage8 out = to_rgb8(image);
  for (int r = 0; r < mask.rows; ++r)
    for (int c = 0; c < mask.cols; ++c) {
      if (!mask.at(r, c)) continue;
      std::uint8_t* p = out.px(r, c);
      p[0] = static_cast<std::uint8_t>((p[0] + 255 + 1) / 2);
      p[1] = static_cast<std::uint8_t>(p[1] / 2);
      p[2] = static_cast<std::uint8_t>(p[2] / 2);
    }
  return out;
}

std::vector<AutoLabel> auto_label(const Checkpoint& checkpoint, const SupportSet& support,
                                  std::span<const CorpusImage> corpus, int workers) {
  support.check();
  if (corpus.empty()) throw InvalidArgument("empty-corpus", "nothing to label");
  for (const auto& p : support.pairs) check_pair(p);
  Network<float> net(checkpoint.model);
  std::vector<AutoLabel> out(corpus.size());
  auto run = [&](std::size_t i) {
    const CorpusImage& item = corpus[i];
    AutoLabel& label = out[i];
    label.image_path = item.path;
    label.prediction = net.forward(checkpoint.params, std::span<const ImageMaskPair>(support.pairs), item.image);
    label.mask = threshold_mask(label.prediction, 0.5);
    label.overlay = red_overlay(item.image, label.mask);
  };
  const std::size_t n_threads = std::clamp<std::size_t>(workers < 1 ? 1 : workers, 1, corpus.size());
  if (n_threads == 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) run(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(n_threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < n_threads; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < corpus.size(); i += n_threads) run(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double mean_margin(const Prediction& p) {
  if (p.probs.values.empty()) return 0.0;
  double sum = 0.0;
  for (float v : p.probs.values) sum += std::abs(static_cast<double>(v) - 0.5);
  return sum / static_cast<double>(p.probs.values.size());
}

std::vector<HardCase> mine_hard_cases(std::span<const AutoLabel> predictions,
                                      std::optional<std::span<const Mask>> truths, std::size_t n) {
  if (truths && truths->size() != predictions.size())
    throw InvalidArgument("truth-count", "expected " + std::to_string(predictions.size()) + " truths, got " +
                                             std::to_string(truths->size()));
  std::vector<HardCase> cases(predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    cases[i].index = i;
    cases[i].image_path = predictions[i].image_path;
    cases[i].predicted = predictions[i].mask;
    cases[i].score = truths ? iou(predictions[i].mask, (*truths)[i]) : mean_margin(predictions[i].prediction);
  }
  std::stable_sort(cases.begin(), cases.end(), [](const HardCase& a, const HardCase& b) {
    return a.score < b.score || (a.score == b.score && a.index < b.index);
  });
  cases.resize(std::min(n, cases.size()));
  return cases;
}

void write_hard_case_manifest(std::span<const HardCase> cases, std::ostream& out) {
  const auto old = out.precision(17);
  out << "rank,image_path,score\n";
  for (std::size_t i = 0; i < cases.size(); ++i)
    out << i + 1 << ',' << cases[i].image_path << ',' << cases[i].score << '\n';
  out.precision(old);
}

SupportSet merge_support_set(const SupportSet& old, std::span<const ImageMaskPair> corrected) {
  old.check();
  if (corrected.empty()) throw InvalidArgument("empty-corrections", "no corrected pairs to merge");
  for (const auto& p : corrected) check_pair(p);
  SupportSet next = old;
  next.version = old.version + 1;
  std::map<std::string, std::size_t> by_path;
  for (std::size_t i = 0; i < next.pairs.size(); ++i) by_path.emplace(next.pairs[i].source_path, i);
  for (const auto& p : corrected) {
    auto it = by_path.find(p.source_path);
    if (it != by_path.end()) {
      next.pairs[it->second] = p;
      next.provenance[it->second] = Provenance::corrected;
    } else {
      by_path.emplace(p.source_path, next.pairs.size());
      next.pairs.push_back(p);
      next.provenance.push_back(Provenance::corrected);
    }
  }
  return next;
}

}  // namespace fewseg
