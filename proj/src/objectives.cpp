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

#include "fewseg/objectives.hpp"

#include <ostream>

#include "fewseg/error.hpp"

namespace fewseg {
namespace {

void check_shapes(const Grid<float>& probs, const Mask& truth) {
  if (!(probs.rows == truth.rows && probs.cols == truth.cols))
    throw InvalidArgument("shape-mismatch", "prediction and mask shapes differ");
}

void check_binary(const Mask& m, const char* what) {
  for (auto v : m.values)
    if (v > 1) throw InvalidArgument("non-binary", std::string(what) + " is not a binary mask");
}

}  // namespace

const char* to_string(LossKind kind) { return kind == LossKind::bce ? "bce" : "mse"; }

std::optional<LossKind> parse_loss_kind(const std::string& text) {
  if (text == "bce") return LossKind::bce;
  if (text == "mse") return LossKind::mse;
  return std::nullopt;
}

LossValue bce_loss(const Prediction& pred, const Mask& truth) {
  check_shapes(pred.probs, truth);
  check_binary(truth, "truth");
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double p = pred.probs.values[i];
    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
      throw InvalidArgument("non-finite", "prediction outside [0, 1]");
    total += truth.values[i] ? -std::log(p) : -std::log1p(-p);
  }
  const double value = total / static_cast<double>(truth.size());
  if (!std::isfinite(value)) throw InvalidArgument("non-finite", "cross entropy diverges on saturated prediction");
  return {value, true};
}

LossValue mse_loss(const Prediction& pred, const Mask& truth) {
  check_shapes(pred.probs, truth);
  check_binary(truth, "truth");
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double p = pred.probs.values[i];
    if (!std::isfinite(p)) throw InvalidArgument("non-finite", "non-finite prediction");
    const double d = p - truth.values[i];
    total += d * d;
  }
  return {total / static_cast<double>(truth.size()), true};
}

LossValue compute_loss(LossKind kind, const Prediction& pred, const Mask& truth) {
  return kind == LossKind::bce ? bce_loss(pred, truth) : mse_loss(pred, truth);
}

Mask threshold_mask(const Prediction& pred, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau", "threshold must lie in (0, 1)");
  Mask m(pred.probs.rows, pred.probs.cols);
  for (std::size_t i = 0; i < m.size(); ++i) m.values[i] = pred.probs.values[i] >= tau ? 1 : 0;
  return m;
}

double iou(const Mask& pred, const Mask& truth) {
  if (!pred.same_shape(truth)) throw InvalidArgument("shape-mismatch", "mask shapes differ");
  check_binary(pred, "prediction");
  check_binary(truth, "truth");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += pred.values[i] & truth.values[i];
    uni += pred.values[i] | truth.values[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

const MetricsReport::Row& MetricsReport::class_row(const std::string& name) const {
  for (const auto& r : classes)
    if (r.name == name) return r;
  throw InvalidArgument("unknown-class", "no class row for " + name);
}

const MetricsReport::Row& MetricsReport::superclass_row(const std::string& name) const {
  for (const auto& r : superclasses)
    if (r.name == name) return r;
  throw InvalidArgument("unknown-class", "no superclass row for " + name);
}

void MetricsReport::write_csv(std::ostream& out, bool include_micro) const {
  const auto old = out.precision(10);
  out << "level,name,n,mean_iou\n";
  for (const auto& r : classes) out << "class," << r.name << ',' << r.n << ',' << r.mean_iou << '\n';
  for (const auto& r : superclasses) out << "superclass," << r.name << ',' << r.n << ',' << r.mean_iou << '\n';
  out << "global," << global.name << ',' << global.n << ',' << global.mean_iou << '\n';
  if (include_micro) out << "global_micro," << global_micro.name << ',' << global_micro.n << ',' << global_micro.mean_iou << '\n';
  out.precision(old);
}

MetricsReport mean_iou(std::span<const IouRecord> records, const HierarchyGraph& hierarchy) {
  if (records.empty()) throw InvalidArgument("empty-records", "no IoU records to aggregate");
  std::map<std::string, std::pair<double, std::size_t>> per_class;
  double micro = 0.0;
  for (const auto& r : records) {
    if (!hierarchy.contains(r.class_name))
      throw InvalidArgument("unknown-class", "class not in hierarchy: " + r.class_name);
    auto& acc = per_class[r.class_name];
    acc.first += r.iou;
    acc.second += 1;
    micro += r.iou;
  }

  MetricsReport report;
  std::map<std::string, std::pair<double, std::size_t>> per_super;
  double macro = 0.0;
  for (const auto& [name, acc] : per_class) {
    const double m = acc.first / static_cast<double>(acc.second);
    report.classes.push_back({name, acc.second, m});
    macro += m;
    for (const auto& top : hierarchy.top_ancestors(name)) {
      per_super[top].first += m;
      per_super[top].second += 1;
    }
  }
  for (const auto& [name, acc] : per_super)
    report.superclasses.push_back({name, acc.second, acc.first / static_cast<double>(acc.second)});
  report.global = {"all", per_class.size(), macro / static_cast<double>(per_class.size())};
  report.global_micro = {"all", records.size(), micro / static_cast<double>(records.size())};
  return report;
}

}  // namespace fewseg
