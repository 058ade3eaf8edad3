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

#include "fewseg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "fewseg/error.hpp"

namespace fs = std::filesystem;

namespace fewseg {
namespace {

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Numeric stems sort numerically ("2" < "10"), anything else lexicographically after.
bool stem_less(const std::string& a, const std::string& b) {
  auto numeric = [](const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
  };
  bool na = numeric(a), nb = numeric(b);
  if (na && nb) return a.size() != b.size() ? a.size() < b.size() : a < b;
  if (na != nb) return na;
  return a < b;
}

// Raw masks are either 0/1 or 0/255 encoded.
Mask binarize_raw_mask(const Grid<std::uint8_t>& raw) {
  std::uint8_t hi = 0;
  for (auto v : raw.values) hi = std::max(hi, v);
  Mask out(raw.rows, raw.cols);
  for (std::size_t i = 0; i < raw.size(); ++i)
    out.values[i] = hi <= 1 ? raw.values[i] : (raw.values[i] > 127 ? 1 : 0);
  return out;
}

bool any_foreground(const Mask& m) {
  return std::any_of(m.values.begin(), m.values.end(), [](std::uint8_t v) { return v != 0; });
}

void inspect_pair(const PairRef& ref, std::vector<Finding>& out) {
  auto add = [&](const std::string& path, const char* rule, const std::string& msg) {
    out.push_back({path, rule, Severity::error, msg});
  };
  RgbImage8 image;
  try {
    image = read_rgb(ref.image_path);
  } catch (const IoError& e) {
    add(ref.image_path, "unreadable-image", e.what());
    return;
  }
  ImageCheck check = validate_image(image.cols, image.rows);
  for (const auto& rule : check.violations) {
    std::ostringstream msg;
    msg << image.cols << "x" << image.rows << " violates " << rule;
    add(ref.image_path, rule.c_str(), msg.str());
  }

  if (!fs::exists(ref.mask_path)) {
    add(ref.mask_path, "missing-mask", "no mask next to image");
  } else {
    Grid<std::uint8_t> raw;
    bool readable = true;
    try {
      raw = read_gray(ref.mask_path);
    } catch (const IoError& e) {
      add(ref.mask_path, "unreadable-mask", e.what());
      readable = false;
    }
    if (readable) {
      if (raw.rows != image.rows || raw.cols != image.cols) {
        add(ref.mask_path, "mask-size-mismatch", "mask and image dimensions differ");
      } else {
        std::set<int> values(raw.values.begin(), raw.values.end());
        bool zero_one = std::all_of(values.begin(), values.end(), [](int v) { return v == 0 || v == 1; });
        bool zero_255 = std::all_of(values.begin(), values.end(), [](int v) { return v == 0 || v == 255; });
        if (!zero_one && !zero_255) {
          std::ostringstream msg;
          msg << values.size() << " distinct mask values";
          add(ref.mask_path, "mask-nonbinary", msg.str());
        }
        Mask resized = binarize_raw_mask(resize_nearest(raw, kImageSide, kImageSide));
        if (!any_foreground(resized)) add(ref.mask_path, "mask-empty", "no foreground pixel after resize");
      }
    }
  }

  if (ref.instance_path) {
    LabelMap inst;
    try {
      inst = read_labels(*ref.instance_path);
    } catch (const IoError& e) {
      add(*ref.instance_path, "unreadable-instance", e.what());
      return;
    }
    if (inst.rows != image.rows || inst.cols != image.cols)
      add(*ref.instance_path, "instance-size-mismatch", "instance mask and image dimensions differ");
    auto [lo, hi] = std::minmax_element(inst.values.begin(), inst.values.end());
    if (!inst.values.empty() && (*lo < 0 || *hi > kMaxInstances)) {
      std::ostringstream msg;
      msg << "instance label " << (*hi > kMaxInstances ? *hi : *lo) << " outside 0.." << kMaxInstances;
      add(*ref.instance_path, "instance-range", msg.str());
    }
  }
}

std::vector<Finding> inspect_class(const ClassListing& listing) {
  std::vector<Finding> out;
  if (listing.pairs.size() != static_cast<std::size_t>(kPairsPerClass)) {
    std::ostringstream msg;
    msg << listing.pairs.size() << " pairs, expected " << kPairsPerClass;
    out.push_back({listing.dir, "class-cardinality", Severity::error, msg.str()});
  }
  for (const auto& ref : listing.pairs) inspect_pair(ref, out);
  for (const auto& m : listing.orphan_masks)
    out.push_back({m, "orphan-mask", Severity::warning, "mask without image"});
  for (const auto& f : listing.stray_files)
    out.push_back({f, "stray-file", Severity::warning, "unrecognised file in class folder"});
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

}  // namespace

const std::string& ImageCheck::rule_id() const {
  static const std::string none;
  return violations.empty() ? none : violations.front();
}

ImageCheck validate_image(int width, int height) {
  ImageCheck check;
  // ratio test in integer arithmetic: 0.5 <= w/h <= 2
  if (static_cast<long>(width) > 2L * height || 2L * width < static_cast<long>(height))
    check.violations.push_back("aspect-ratio");
  if (std::min(width, height) < kImageSide) check.violations.push_back("min-side");
  check.accepted = check.violations.empty();
  return check;
}

ImageMaskPair load_pair(const std::string& image_path, const std::string& mask_path) {
  if (!fs::exists(image_path)) throw IoError("missing-file", "image not found: " + image_path);
  if (!fs::exists(mask_path)) throw IoError("missing-file", "mask not found: " + mask_path);
  RgbImage8 raw = read_rgb(image_path);
  ImageCheck check = validate_image(raw.cols, raw.rows);
  if (!check.accepted) throw DataError(check.rule_id(), image_path + " rejected by " + check.rule_id());
  Grid<std::uint8_t> raw_mask = read_gray(mask_path);
  if (raw_mask.rows != raw.rows || raw_mask.cols != raw.cols)
    throw DataError("mask-size-mismatch", "mask and image dimensions differ: " + mask_path);

  ImageMaskPair pair;
  pair.image = to_float(resize_smooth(raw, kImageSide, kImageSide));
  pair.mask = binarize_raw_mask(resize_nearest(raw_mask, kImageSide, kImageSide));
  pair.source_path = image_path;
  if (!any_foreground(pair.mask)) throw DataError("mask-empty", "all-background mask: " + mask_path);
  return pair;
}

void write_pair(const ImageMaskPair& pair, const std::string& image_path, const std::string& mask_path) {
  write_rgb(image_path, to_rgb8(pair.image));
  Grid<std::uint8_t> raw(pair.mask.rows, pair.mask.cols);
  for (std::size_t i = 0; i < raw.size(); ++i) raw.values[i] = pair.mask.values[i] ? 255 : 0;
  write_gray(mask_path, raw);
}

std::vector<ClassListing> list_class_dirs(const std::string& root) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw IoError("unreadable-root", "not a readable directory: " + root);
  std::vector<ClassListing> out;
  fs::directory_iterator it(root, ec);
  if (ec) throw IoError("unreadable-root", "cannot list " + root + ": " + ec.message());
  for (const auto& entry : it) {
    if (!entry.is_directory()) continue;
    std::string name = entry.path().filename().string();
    if (name.empty() || name[0] == '.') continue;
    ClassListing listing;
    listing.name = name;
    listing.dir = entry.path().string();
    std::map<std::string, std::string> images;
    std::set<std::string> masks, instances;
    for (const auto& f : fs::directory_iterator(entry.path())) {
      if (!f.is_regular_file()) continue;
      std::string file = f.path().filename().string();
      if (has_suffix(file, ".inst.png")) {
        instances.insert(file.substr(0, file.size() - 9));
      } else if (has_suffix(file, ".png")) {
        masks.insert(file.substr(0, file.size() - 4));
      } else if (has_suffix(file, ".jpg")) {
        images[file.substr(0, file.size() - 4)] = f.path().string();
      } else {
        listing.stray_files.push_back(f.path().string());
      }
    }
    std::vector<std::string> stems;
    for (const auto& [stem, path] : images) stems.push_back(stem);
    std::sort(stems.begin(), stems.end(), stem_less);
    for (const auto& stem : stems) {
      PairRef ref;
      ref.image_path = images[stem];
      ref.mask_path = (entry.path() / (stem + ".png")).string();
      if (instances.count(stem)) ref.instance_path = (entry.path() / (stem + ".inst.png")).string();
      listing.pairs.push_back(std::move(ref));
    }
    for (const auto& stem : masks)
      if (!images.count(stem)) listing.orphan_masks.push_back((entry.path() / (stem + ".png")).string());
    std::sort(listing.stray_files.begin(), listing.stray_files.end());
    out.push_back(std::move(listing));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return out;
}

DatasetRegistry DatasetRegistry::open(const std::string& root) {
  std::vector<ClassListing> listings = list_class_dirs(root);
  fs::path hierarchy_path = fs::path(root) / "hierarchy.json";
  if (!fs::exists(hierarchy_path)) throw IoError("missing-hierarchy", "no hierarchy.json under " + root);
  HierarchyGraph hierarchy = HierarchyGraph::load_json(hierarchy_path.string());
  std::vector<ClassEntry> classes;
  for (auto& l : listings) classes.push_back({l.name, std::move(l.pairs)});
  return from_parts(root, std::move(classes), std::move(hierarchy));
}

DatasetRegistry DatasetRegistry::from_parts(std::string root, std::vector<ClassEntry> classes,
                                            HierarchyGraph hierarchy) {
  DatasetRegistry reg;
  reg.root_ = std::move(root);
  reg.hierarchy_ = std::move(hierarchy);
  std::set<std::string> paths;
  for (auto& c : classes) {
    if (!reg.hierarchy_.contains(c.name) || reg.hierarchy_.node(c.name).level != Level::bottom)
      throw InvalidArgument("class-not-in-hierarchy", "class is not a bottom hierarchy node: " + c.name);
    for (const auto& p : c.pairs)
      if (!paths.insert(p.image_path).second)
        throw InvalidArgument("duplicate-path", "image listed twice: " + p.image_path);
    std::string name = c.name;
    if (!reg.classes_.emplace(name, std::move(c)).second)
      throw InvalidArgument("duplicate-class", "class listed twice: " + name);
  }
  return reg;
}

const ClassEntry& DatasetRegistry::class_entry(const std::string& name) const {
  auto it = classes_.find(name);
  if (it == classes_.end()) throw InvalidArgument("unknown-class", "no such class: " + name);
  return it->second;
}

std::vector<std::string> DatasetRegistry::class_names() const {
  std::vector<std::string> out;
  for (const auto& [name, c] : classes_) out.push_back(name);
  return out;
}

std::size_t DatasetRegistry::total_pairs() const {
  std::size_t n = 0;
  for (const auto& [name, c] : classes_) n += c.pairs.size();
  return n;
}

std::string DatasetRegistry::primary_superclass(const std::string& class_name) const {
  auto tops = hierarchy_.top_ancestors(class_name);
  if (tops.empty()) throw InvalidArgument("hierarchy-unreachable", "class reaches no top-level node: " + class_name);
  return tops.front();
}

std::size_t ValidationReport::error_count() const {
  return std::count_if(findings.begin(), findings.end(),
                       [](const Finding& f) { return f.severity == Severity::error; });
}

std::size_t ValidationReport::warning_count() const { return findings.size() - error_count(); }

std::set<std::string> ValidationReport::rule_ids(Severity severity) const {
  std::set<std::string> out;
  for (const auto& f : findings)
    if (f.severity == severity) out.insert(f.rule_id);
  return out;
}

void ValidationReport::write_csv(std::ostream& out) const {
  out << "path,rule_id,severity,message\n";
  for (const auto& f : findings)
    out << csv_field(f.path) << ',' << f.rule_id << ',' << (f.severity == Severity::error ? "error" : "warning")
        << ',' << csv_field(f.message) << '\n';
}

ValidationReport validate_registry(const std::string& root, int workers) {
  std::vector<ClassListing> listings = list_class_dirs(root);
  ValidationReport report;

  std::vector<std::vector<Finding>> per_class(listings.size());
  const std::size_t n_workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, listings.size()));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < listings.size(); ++i) per_class[i] = inspect_class(listings[i]);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w)
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < listings.size(); i += n_workers) per_class[i] = inspect_class(listings[i]);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& f : per_class) report.findings.insert(report.findings.end(), f.begin(), f.end());

  fs::path hpath = fs::path(root) / "hierarchy.json";
  auto add = [&](const std::string& path, const char* rule, Severity sev, const std::string& msg) {
    report.findings.push_back({path, rule, sev, msg});
  };
  if (!fs::exists(hpath)) {
    add(hpath.string(), "missing-hierarchy", Severity::error, "hierarchy file not found");
    return report;
  }
  HierarchyGraph h;
  try {
    h = HierarchyGraph::load_json(hpath.string());
  } catch (const IoError& e) {
    add(hpath.string(), "hierarchy-format", Severity::error, e.what());
    return report;
  }
  for (const auto& node : h.cycle_members())
    add(hpath.string(), "hierarchy-cycle", Severity::error, "cycle through " + node);
  for (const auto& [child, parent] : h.dangling_edges())
    add(hpath.string(), "hierarchy-dangling-parent", Severity::error, child + " -> undeclared " + parent);
  auto tops = h.nodes_at(Level::top);
  if (tops.size() != static_cast<std::size_t>(kTopLevelClasses)) {
    std::ostringstream msg;
    msg << tops.size() << " top-level nodes, expected " << kTopLevelClasses;
    add(hpath.string(), "hierarchy-top-count", Severity::warning, msg.str());
  }
  std::set<std::string> class_names;
  for (const auto& l : listings) {
    class_names.insert(l.name);
    if (!h.contains(l.name) || h.node(l.name).level != Level::bottom) {
      add(l.dir, "class-not-in-hierarchy", Severity::error, "class folder is not a bottom-level node");
    } else if (h.top_ancestors(l.name).empty()) {
      add(l.dir, "hierarchy-unreachable", Severity::error, "class reaches no top-level node");
    }
  }
  for (const auto& b : h.nodes_at(Level::bottom))
    if (!class_names.count(b))
      add(hpath.string(), "hierarchy-orphan-class", Severity::warning, "bottom node without folder: " + b);
  return report;
}

const std::vector<std::string>& SplitSpec::named(const std::string& split) const {
  if (split == "train") return train;
  if (split == "val") return val;
  if (split == "test") return test;
  throw InvalidArgument("unknown-split", "split must be train, val or test: " + split);
}

void save_splits(const SplitSpec& splits, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("unwritable", "cannot write splits file: " + path);
  out << "# seed\t" << splits.seed << '\n';
  for (const char* name : {"train", "val", "test"})
    for (const auto& c : splits.named(name)) out << name << '\t' << c << '\n';
  if (!out) throw IoError("unwritable", "failed writing splits file: " + path);
}

SplitSpec load_splits(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("unreadable", "cannot open splits file: " + path);
  SplitSpec s;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (line[0] == '#') {
      if (line.rfind("# seed\t", 0) == 0) s.seed = std::stoull(line.substr(7));
      continue;
    }
    if (tab == std::string::npos)
      throw IoError("splits-format", path + ":" + std::to_string(lineno) + ": expected split<TAB>class");
    std::string split = line.substr(0, tab), cls = line.substr(tab + 1);
    if (split == "train") s.train.push_back(cls);
    else if (split == "val") s.val.push_back(cls);
    else if (split == "test") s.test.push_back(cls);
    else throw IoError("splits-format", path + ":" + std::to_string(lineno) + ": unknown split " + split);
  }
  return s;
}

std::string default_splits_path(const std::string& root, std::uint64_t seed) {
  return (fs::path(root) / ("splits-" + std::to_string(seed) + ".txt")).string();
}

SplitSpec build_splits(const DatasetRegistry& registry, int per_super_val, int per_super_test,
                       std::uint64_t seed) {
  if (per_super_val < 0 || per_super_test < 0)
    throw InvalidArgument("split-count", "per-superclass counts must be non-negative");
  std::map<std::string, std::vector<std::string>> by_super;
  for (const auto& name : registry.class_names()) by_super[registry.primary_superclass(name)].push_back(name);

  SplitSpec s;
  s.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& [super, members] : by_super) {
    const std::size_t need = static_cast<std::size_t>(per_super_val) + per_super_test;
    if (members.size() < need) {
      std::ostringstream msg;
      msg << "superclass " << super << " has " << members.size() << " classes, needs " << need;
      throw InvalidArgument("insufficient-classes", msg.str());
    }
    std::shuffle(members.begin(), members.end(), rng);
    auto val_end = members.begin() + per_super_val;
    auto test_end = val_end + per_super_test;
    s.val.insert(s.val.end(), members.begin(), val_end);
    s.test.insert(s.test.end(), val_end, test_end);
    s.train.insert(s.train.end(), test_end, members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

DatasetStats compute_stats(const DatasetRegistry& registry) {
  if (registry.classes().empty()) throw InvalidArgument("empty-registry", "registry has no classes");
  DatasetStats st;
  std::size_t total = 0;
  for (const auto& [name, c] : registry.classes()) {
    st.class_counts[name] = c.pairs.size();
    total += c.pairs.size();
  }
  const double n = static_cast<double>(st.class_counts.size());
  st.mean = static_cast<double>(total) / n;
  double ss = 0.0;
  for (const auto& [name, count] : st.class_counts) ss += (count - st.mean) * (count - st.mean);
  st.stddev = std::sqrt(ss / n);

  std::map<std::string, std::size_t> per_super;
  for (const auto& [name, count] : st.class_counts) per_super[registry.primary_superclass(name)] += count;
  for (const auto& [super, count] : per_super)
    st.superclass_distribution[super] = total == 0 ? 1.0 / per_super.size() : static_cast<double>(count) / total;
  return st;
}

void write_stats_csv(const DatasetStats& stats, std::ostream& out) {
  out << "kind,name,value\n";
  out.precision(17);
  for (const auto& [name, count] : stats.class_counts) out << "class_count," << csv_field(name) << ',' << count << '\n';
  for (const auto& [name, share] : stats.superclass_distribution)
    out << "superclass_share," << csv_field(name) << ',' << share << '\n';
  out << "summary,mean," << stats.mean << '\n';
  out << "summary,stddev," << stats.stddev << '\n';
}

Mask binarize_labels(const LabelMap& labels, int target_class) {
  Mask m(labels.rows, labels.cols);
  for (std::size_t i = 0; i < labels.size(); ++i) m.values[i] = labels.values[i] == target_class ? 1 : 0;
  return m;
}

BinarizedClass binarize_multiclass_dataset(std::span<const LabeledImage> samples, int target_class,
                                           const std::optional<std::set<int>>& vocabulary) {
  std::set<int> vocab;
  if (vocabulary) {
    vocab = *vocabulary;
  } else {
    for (const auto& s : samples) vocab.insert(s.labels.values.begin(), s.labels.values.end());
  }
  if (!vocab.count(target_class))
    throw InvalidArgument("unknown-class", "target class " + std::to_string(target_class) + " not in vocabulary");

  BinarizedClass out;
  out.target_class = target_class;
  for (const auto& s : samples) {
    if (s.labels.rows != s.image.rows || s.labels.cols != s.image.cols) {
      out.excluded.push_back({s.source_path, "label-size-mismatch"});
      continue;
    }
    Mask full = binarize_labels(s.labels, target_class);
    if (!any_foreground(full)) {
      out.excluded.push_back({s.source_path, "no-target"});
      continue;
    }
    ImageCheck check = validate_image(s.image.cols, s.image.rows);
    if (!check.accepted) {
      out.excluded.push_back({s.source_path, check.rule_id()});
      continue;
    }
    ImageMaskPair pair;
    pair.mask = resize_nearest(full, kImageSide, kImageSide);
    if (!any_foreground(pair.mask)) {
      out.excluded.push_back({s.source_path, "mask-empty"});
      continue;
    }
    pair.image = to_float(resize_smooth(s.image, kImageSide, kImageSide));
    pair.source_path = s.source_path;
    out.pairs.push_back(std::move(pair));
  }
  return out;
}

std::shared_ptr<const ImageMaskPair> PairCache::get(const PairRef& ref) {
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(ref.image_path);
    if (it != entries_.end()) return it->second;
  }
  auto pair = std::make_shared<const ImageMaskPair>(load_pair(ref.image_path, ref.mask_path));
  std::lock_guard lock(mutex_);
  if (capacity_ == 0) return pair;
  auto [it, inserted] = entries_.emplace(ref.image_path, pair);
  if (inserted) {
    order_.push_back(ref.image_path);
    while (entries_.size() > capacity_) {
      entries_.erase(order_.front());
      order_.erase(order_.begin());
    }
  }
  return it->second;
}

std::size_t PairCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace fewseg
