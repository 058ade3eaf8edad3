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

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fewseg/hierarchy.hpp"
#include "fewseg/image.hpp"

namespace fewseg {

inline constexpr int kImageSide = 224;
inline constexpr int kPairsPerClass = 10;
inline constexpr int kMaxInstances = 10;
inline constexpr int kTopLevelClasses = 12;

// Collection filters on raw image dimensions.
struct ImageCheck {
  bool accepted = true;
  // Every violated rule, "aspect-ratio" before "min-side"; empty when accepted.
  std::vector<std::string> violations;

  const std::string& rule_id() const;
};
ImageCheck validate_image(int width, int height);

// A loaded 224x224 image with its binary mask.
struct ImageMaskPair {
  ColorImage image;
  Mask mask;
  std::string source_path;
};

// On-disk location of one pair.
struct PairRef {
  std::string image_path;
  std::string mask_path;
  std::optional<std::string> instance_path;

  friend bool operator==(const PairRef&, const PairRef&) = default;
};

struct ClassEntry {
  std::string name;
  std::vector<PairRef> pairs;
};

// Loads and resizes a pair. Throws DataError (code = rule id) or IoError.
ImageMaskPair load_pair(const std::string& image_path, const std::string& mask_path);
// Writes the image as 8-bit colour and the mask as 0/255 grey.
void write_pair(const ImageMaskPair& pair, const std::string& image_path, const std::string& mask_path);

// Classes, their pairs and the hierarchy of an FSS-style corpus. Immutable
// once built.
class DatasetRegistry {
 public:
  // Scans `<root>/<class>/<k>.jpg|png` and `<root>/hierarchy.json`.
  static DatasetRegistry open(const std::string& root);
  // Checks that each class is a bottom-level node and image paths are unique.
  static DatasetRegistry from_parts(std::string root, std::vector<ClassEntry> classes,
                                    HierarchyGraph hierarchy);

  const std::string& root_path() const { return root_; }
  const HierarchyGraph& hierarchy() const { return hierarchy_; }
  const std::map<std::string, ClassEntry>& classes() const { return classes_; }
  const ClassEntry& class_entry(const std::string& name) const;
  bool has_class(const std::string& name) const { return classes_.count(name) != 0; }
  std::vector<std::string> class_names() const;
  std::size_t total_pairs() const;

  // Superclass used for quota accounting: lexicographically-first top ancestor.
  std::string primary_superclass(const std::string& class_name) const;

 private:
  std::string root_;
  std::map<std::string, ClassEntry> classes_;
  HierarchyGraph hierarchy_;
};

// Raw directory listing of one class folder, no rules applied.
struct ClassListing {
  std::string name;
  std::string dir;
  std::vector<PairRef> pairs;
  std::vector<std::string> orphan_masks;
  std::vector<std::string> stray_files;
};
std::vector<ClassListing> list_class_dirs(const std::string& root);

enum class Severity { error, warning };

struct Finding {
  std::string path;
  std::string rule_id;
  Severity severity = Severity::error;
  std::string message;
};

struct ValidationReport {
  std::vector<Finding> findings;

  std::size_t error_count() const;
  std::size_t warning_count() const;
  bool conforms() const { return error_count() == 0; }
  std::set<std::string> rule_ids(Severity severity) const;
  // CSV `path,rule_id,severity,message`.
  void write_csv(std::ostream& out) const;
};

// Applies every collection rule to the corpus under `root`. Throws IoError
// only when the root itself cannot be read.
ValidationReport validate_registry(const std::string& root, int workers = 1);

struct SplitSpec {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  const std::vector<std::string>& named(const std::string& split) const;
  friend bool operator==(const SplitSpec&, const SplitSpec&) = default;
};

// Lines of `split<TAB>class`, preceded by a `# seed<TAB>n` comment.
void save_splits(const SplitSpec& splits, const std::string& path);
SplitSpec load_splits(const std::string& path);
std::string default_splits_path(const std::string& root, std::uint64_t seed);

// Per superclass, draws `per_super_val` then `per_super_test` distinct classes;
// everything else is train.
SplitSpec build_splits(const DatasetRegistry& registry, int per_super_val, int per_super_test,
                       std::uint64_t seed);

struct DatasetStats {
  std::map<std::string, std::size_t> class_counts;
  double mean = 0.0;
  double stddev = 0.0;  // population
  // Fraction of all images per superclass; sums to 1.
  std::map<std::string, double> superclass_distribution;
};
DatasetStats compute_stats(const DatasetRegistry& registry);
void write_stats_csv(const DatasetStats& stats, std::ostream& out);

// Raw multi-class sample as found in segmentation corpora.
struct LabeledImage {
  RgbImage8 image;
  LabelMap labels;
  std::string source_path;
};

struct Exclusion {
  std::string source_path;
  std::string reason;
};

struct BinarizedClass {
  int target_class = 0;
  std::vector<ImageMaskPair> pairs;
  std::vector<Exclusion> excluded;
};

// 1 where labels == target, else 0.
Mask binarize_labels(const LabelMap& labels, int target_class);

// Turns one class of a multi-class corpus into FSS-style pairs, dropping
// images without the target and images failing the collection filters.
// `vocabulary` defaults to the set of labels present in `samples`.
BinarizedClass binarize_multiclass_dataset(std::span<const LabeledImage> samples, int target_class,
                                           const std::optional<std::set<int>>& vocabulary = {});

// Shared, bounded cache of loaded pairs keyed by image path.
class PairCache {
 public:
  explicit PairCache(std::size_t capacity = 1024) : capacity_(capacity) {}

  std::shared_ptr<const ImageMaskPair> get(const PairRef& ref);
  std::size_t size() const;

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<const ImageMaskPair>> entries_;
  std::vector<std::string> order_;
};

}  // namespace fewseg
