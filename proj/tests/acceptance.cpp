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


// Acceptance runner: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fewseg/cli.hpp"
#include "fewseg/dataset.hpp"
#include "fewseg/error.hpp"
#include "fewseg/runtime.hpp"
#include "fewseg/synthetic.hpp"
#include "fewseg/training.hpp"
#include "fewseg/workflow.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace fewseg;
using testing::TempDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double budget_seconds;  // CPU seconds
  std::function<Outcome(double& timed_cpu)> run;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

double cpu_now() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// Adds CPU time spent in `f` to `timed`; setup outside such blocks is not charged.
template <typename F>
auto timed_block(double& timed, F&& f) {
  const double t0 = cpu_now();
  struct Charge {
    double& timed;
    double t0;
    ~Charge() { timed += cpu_now() - t0; }
  } charge{timed, t0};
  return f();
}

// --- 1 ---------------------------------------------------------------------

Outcome validator_exactness(double& timed) {
  Outcome o{true, {}};
  int checked = 0;
  for (const auto& fx : testing::violation_fixtures()) {
    TempDir dir("acc-validate");
    testing::write_violation_fixture(dir.path(), fx.name);
    ValidationReport report = timed_block(timed, [&] { return validate_registry(dir.str()); });
    std::set<std::string> got;
    for (const auto& f : report.findings) got.insert(f.rule_id);
    ++checked;
    if (got != fx.expected_errors || report.conforms() != fx.expected_errors.empty()) {
      o.pass = false;
      std::string ids;
      for (const auto& g : got) ids += (ids.empty() ? "" : "+") + g;
      o.detail += fx.name + " gave {" + ids + "} ";
    }
  }
  if (o.pass) o.detail = std::to_string(checked) + " fixtures, exact rule-id sets";
  return o;
}

// --- 2 ---------------------------------------------------------------------

Outcome split_protocol(double& timed) {
  TempDir dir("acc-splits");
  const std::string root = (dir.path() / "synth1000").string();
  build_synthetic_dataset({1000, 7}, root);
  const std::string expected = "split,classes,pairs\ntrain,520,5200\nval,240,2400\ntest,240,2400\n";
  std::string first_file;
  Outcome o{true, {}};
  for (int rerun = 0; rerun < 3; ++rerun) {
    std::ostringstream out, err;
    int code = timed_block(timed, [&] {
      return cli_dispatch({"splits", "--dataset", root, "--per-super-val", "20", "--per-super-test", "20", "--seed",
                           "7"},
                          out, err);
    });
    std::ifstream in(default_splits_path(root, 7));
    std::stringstream file;
    file << in.rdbuf();
    if (rerun == 0) first_file = file.str();
    if (code != kExitOk || out.str() != expected || file.str() != first_file) {
      o.pass = false;
      o.detail = "rerun " + std::to_string(rerun) + " exit " + std::to_string(code) + ": " + out.str() + err.str();
      return o;
    }
  }
  o.detail = "520/240/240 classes, 5200/2400/2400 pairs, 3 identical reruns";
  return o;
}

// --- 3 ---------------------------------------------------------------------

Outcome metric_oracles(double& timed) {
  return timed_block(timed, [] {
    std::mt19937_64 rng(2026);
    int iou_mismatch = 0;
    double worst_bce = 0.0, worst_mse = 0.0;
    for (int i = 0; i < 1000; ++i) {
      Mask pred = testing::random_mask(8, 8, rng, 0.1 + 0.8 * (i % 9) / 9.0);
      Mask truth = testing::random_mask(8, 8, rng, 0.5);
      iou_mismatch += iou(pred, truth) != testing::oracle_iou(pred, truth);
      Prediction p = testing::random_prediction(8, 8, rng);
      worst_bce = std::max(worst_bce, testing::relative_error(bce_loss(p, truth).value, testing::oracle_bce(p, truth)));
      worst_mse = std::max(worst_mse, testing::relative_error(mse_loss(p, truth).value, testing::oracle_mse(p, truth)));
    }
    Outcome o;
    o.pass = iou_mismatch == 0 && worst_bce <= 1e-12 && worst_mse <= 1e-12;
    o.detail = "1000 cases; iou mismatches " + std::to_string(iou_mismatch) + ", worst rel bce " + fmt(worst_bce) +
               ", mse " + fmt(worst_mse);
    return o;
  });
}

// --- 4 ---------------------------------------------------------------------

Outcome architecture_invariants(double& timed) {
  return timed_block(timed, [] {
    const ModelConfig c = testing::tiny_config(kImageSide);
    Network<float> net(c);
    std::mt19937_64 rng(404);
    double worst_perm = 0.0;
    int dup_failures = 0, range_failures = 0;
    for (int draw = 0; draw < 100; ++draw) {
      auto p = init_params<float>(c, 1000 + draw);
      testing::jitter(p, rng, 0.05);
      const int k = 2 + draw % 4;
      std::vector<Tensor<float>> s;
      for (int i = 0; i < k; ++i) s.push_back(testing::random_support<float>(kImageSide, rng));
      auto q = testing::random_query<float>(kImageSide, rng);
      Prediction base = net.forward(p, s, q);
      if (base.probs.rows != kImageSide || base.probs.cols != kImageSide) ++range_failures;
      for (float v : base.probs.values) range_failures += !(v > 0.0f && v < 1.0f);

      std::vector<Tensor<float>> perm = s;
      std::shuffle(perm.begin(), perm.end(), rng);
      std::rotate(perm.begin(), perm.begin() + 1, perm.end());
      Prediction permuted = net.forward(p, perm, q);
      for (std::size_t i = 0; i < base.probs.size(); ++i)
        worst_perm = std::max(worst_perm, static_cast<double>(std::abs(permuted.probs.values[i] - base.probs.values[i])));

      std::vector<Tensor<float>> single = {s[0]}, dup(k, s[0]);
      dup_failures += net.forward(p, single, q).probs != net.forward(p, dup, q).probs;
    }
    Outcome o;
    o.pass = worst_perm <= 1e-6 && dup_failures == 0 && range_failures == 0;
    o.detail = "100 draws; worst permutation diff " + fmt(worst_perm) + ", duplicate mismatches " +
               std::to_string(dup_failures) + ", shape/range violations " + std::to_string(range_failures);
    return o;
  });
}

// --- 5 ---------------------------------------------------------------------

Outcome gradient_check(double& timed) {
  return timed_block(timed, [] {
    Outcome o{true, {}};
    for (LossKind kind : {LossKind::bce, LossKind::mse}) {
      testing::GradientCheck g = testing::check_gradient(kind, 7);
      const bool ok = g.samples.size() >= 200 && g.worst() < 1e-4 && std::abs(g.loss - g.reference) <= 1e-12;
      o.pass = o.pass && ok;
      o.detail += std::string(to_string(kind)) + ": " + std::to_string(g.samples.size()) + " params, worst rel " +
                  fmt(g.worst()) + "; ";
    }
    return o;
  });
}

// --- 6 ---------------------------------------------------------------------

Outcome overfit_smoke(double& timed) {
  // Independent scratch run on this episode (class 0, seed 1, 5 supports)
  // met both thresholds after about 90 updates; other episodes took 130 to 470.
  const SyntheticClass cls = synthetic_class(0);
  Episode ep;
  ep.class_name = cls.name;
  for (int i = 0; i < 5; ++i) ep.support.push_back(render_synthetic_pair(cls, 1, i));
  ImageMaskPair q = render_synthetic_pair(cls, 1, 5);
  ep.query_images.push_back(q.image);
  ep.query_truth.push_back(q.mask);
  ep.query_paths.push_back("query");

  return timed_block(timed, [&] {
    const ModelConfig m = testing::tiny_config(kImageSide);
    TrainConfig t;
    t.lr0 = 1e-3;
    t.halve_every = 1u << 30;
    t.k_shot = 5;
    t.seed = 1;
    Trainer trainer(m, t, init_params<float>(m, 1));
    double loss = 0.0, score = 0.0;
    for (int update = 1; update <= 500; ++update) {
      trainer.step(ep, update - 1);
      Prediction p = trainer.network().forward(trainer.params(), std::span<const ImageMaskPair>(ep.support),
                                               ep.query_images[0]);
      loss = bce_loss(p, q.mask).value;
      score = iou(threshold_mask(p), q.mask);
      if (loss < 0.05 && score >= 0.95)
        return Outcome{true, "met at update " + std::to_string(update) + ": loss " + fmt(loss) + ", IoU " + fmt(score)};
    }
    return Outcome{false, "after 500 updates loss " + fmt(loss) + ", IoU " + fmt(score)};
  });
}

// --- 7 ---------------------------------------------------------------------

Outcome generalization(double& timed) {
  TempDir dir("acc-general");
  const std::uint64_t seed = 1;
  DatasetRegistry reg = build_synthetic_dataset({30, seed}, dir.str());
  std::vector<std::string> names = reg.class_names();
  std::mt19937_64 rng(seed);
  std::shuffle(names.begin(), names.end(), rng);
  SplitSpec split;
  split.seed = seed;
  split.test.assign(names.begin(), names.begin() + 5);
  split.train.assign(names.begin() + 5, names.end());
  std::sort(split.test.begin(), split.test.end());
  std::sort(split.train.begin(), split.train.end());

  ModelConfig model;
  model.encoder = {4, 8, 2, 1, 0};
  TrainConfig t;
  t.n_episodes = 5000;
  t.halve_every = t.n_episodes / 3;
  t.seed = seed;
  t.eval_episodes_per_class = 20;
  auto cache = std::make_shared<PairCache>();

  auto constant = [](float v) {
    return [v](const Episode&, std::size_t) { return Prediction{Grid<float>(kImageSide, kImageSide, v)}; };
  };
  const double fg = evaluate_predictor(constant(1.0f), reg, split.test, 5, 20, seed, cache.get()).global.mean_iou;
  const double bg = evaluate_predictor(constant(0.0f), reg, split.test, 5, 20, seed, cache.get()).global.mean_iou;

  AblationResult r = timed_block(timed, [&] { return kshot_ablation(reg, split, model, t, {5, 1}, cache); });
  const double five = r.reports[0].global.mean_iou, one = r.reports[1].global.mean_iou;
  const double margin = five - std::max(fg, bg);
  Outcome o;
  o.pass = margin >= 0.15 && five >= one;
  o.detail = "held-out mIoU 5-shot " + fmt(five) + ", 1-shot " + fmt(one) + "; baselines fg " + fmt(fg) + ", bg " +
             fmt(bg) + "; margin " + fmt(margin);
  return o;
}

// --- 8 ---------------------------------------------------------------------

Outcome schedule_and_resume(double& timed) {
  Outcome o{true, {}};
  const std::vector<std::pair<std::uint64_t, double>> expect = {{0, 1e-3}, {50000, 5e-4}, {125000, 2.5e-4}};
  for (auto [episode, lr] : expect)
    if (testing::relative_error(lr_schedule(1e-3, 50000, episode), lr) > 1e-15) {
      o.pass = false;
      o.detail += "lr at " + std::to_string(episode) + " is " + fmt(lr_schedule(1e-3, 50000, episode)) + "; ";
    }

  TempDir dir("acc-resume");
  DatasetRegistry reg = build_synthetic_dataset({6, 3}, (dir.path() / "data").string());
  auto names = reg.class_names();
  SplitSpec split;
  split.train.assign(names.begin(), names.begin() + 4);
  const ModelConfig model = testing::tiny_config(kImageSide);
  TrainConfig t;
  t.k_shot = 1;
  t.halve_every = 40;
  t.seed = 21;

  std::size_t mismatches = 0;
  timed_block(timed, [&] {
    t.n_episodes = 300;
    TrainResult full = train(reg, split, model, t);
    t.n_episodes = 100;
    TrainResult head = train(reg, split, model, t);
    const std::string path = (dir.path() / "ckpt.bin").string();
    save_checkpoint(head.checkpoint, path);
    Checkpoint loaded = load_checkpoint(path);
    TrainOptions opts;
    opts.resume = &loaded;
    t.n_episodes = 300;
    TrainResult tail = train(reg, split, model, t, opts);
    if (tail.trace.size() != 200) return mismatches = 200;
    for (std::size_t i = 0; i < 200; ++i) mismatches += !(tail.trace[i] == full.trace[100 + i]);
    mismatches += !(tail.checkpoint == full.checkpoint);
    return mismatches;
  });
  o.pass = o.pass && mismatches == 0;
  o.detail += "lr 1e-3/5e-4/2.5e-4 at 0/50k/125k; resumed window of 200 episodes, " + std::to_string(mismatches) +
              " mismatches";
  return o;
}

// --- 9 ---------------------------------------------------------------------

AutoLabel label_with_hits(int hits) {
  AutoLabel a;
  a.mask = Mask(10, 10, 0);
  for (int i = 0; i < hits; ++i) a.mask.values[i] = 1;
  return a;
}

AutoLabel label_with_prob(float p) {
  AutoLabel a;
  a.prediction.probs = Grid<float>(4, 4, p);
  a.mask = threshold_mask(a.prediction);
  return a;
}

std::vector<ImageMaskPair> corpus_pairs(int first, int count) {
  std::vector<ImageMaskPair> out;
  for (int i = first; i < first + count; ++i) {
    ImageMaskPair p = render_synthetic_pair(synthetic_class(2), 4, i);
    p.source_path = "corpus/" + std::to_string(i);
    out.push_back(std::move(p));
  }
  return out;
}

Outcome workflow_determinism(double& timed) {
  std::vector<std::string> broken;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) broken.push_back(what);
  };

  timed_block(timed, [&] {
    Mask truth(10, 10, 0);
    for (int i = 0; i < 10; ++i) truth.values[i] = 1;
    std::vector<AutoLabel> by_iou = {label_with_hits(9), label_with_hits(2), label_with_hits(5)};
    std::vector<Mask> truths(3, truth);
    auto cases = mine_hard_cases(by_iou, std::span<const Mask>(truths), 2);
    expect(cases.size() == 2 && cases[0].index == 1 && cases[1].index == 2, "mine ious {0.9,0.2,0.5} n=2");
    expect(mine_hard_cases(by_iou, std::span<const Mask>(truths), 0).empty(), "mine n=0");
    std::vector<AutoLabel> by_margin = {label_with_prob(0.95f), label_with_prob(0.55f)};
    auto m = mine_hard_cases(by_margin, std::nullopt, 2);
    expect(m.size() == 2 && m[0].index == 1, "mine margins {0.45,0.05}");
    std::vector<AutoLabel> ties = {label_with_hits(4), label_with_hits(4), label_with_hits(1), label_with_hits(4)};
    std::vector<Mask> tie_truths(4, truth);
    auto t = mine_hard_cases(ties, std::span<const Mask>(tie_truths), 4);
    expect(t.size() == 4 && t[0].index == 2 && t[1].index == 0 && t[2].index == 1 && t[3].index == 3,
           "mine tie order");

    SupportSet v1 = SupportSet::initial(corpus_pairs(0, 5));
    SupportSet v2 = merge_support_set(v1, corpus_pairs(5, 3));
    expect(v2.version == 2 && v2.pairs.size() == 8 &&
               std::count(v2.provenance.begin(), v2.provenance.end(), Provenance::corrected) == 3,
           "merge v1 of 5 + 3");
    std::vector<ImageMaskPair> dup = corpus_pairs(0, 1);
    SupportSet v3 = merge_support_set(v2, dup);
    expect(v3.version == 3 && v3.pairs.size() == 8 && v3.provenance[0] == Provenance::corrected,
           "merge duplicate path");
    bool threw = false;
    try {
      merge_support_set(v3, {});
    } catch (const InvalidArgument&) {
      threw = true;
    }
    expect(threw, "merge empty corrections");
    return 0;
  });

  TempDir dir("acc-corpus");
  for (int i = 0; i < 20; ++i)
    write_rgb((dir.path() / ("img-" + std::to_string(100 + i) + ".png")).string(),
              to_rgb8(render_synthetic_pair(synthetic_class(i % 3), 9, i).image));
  const ModelConfig model = testing::tiny_config(kImageSide);
  Checkpoint ck{model, {}, 0, 0, init_params<float>(model, 5), {}};
  ck.optimizer = AdamState<float>::zeros_like(ck.params);
  SupportSet support = SupportSet::initial(corpus_pairs(0, 3));
  std::size_t differing = 0, labelled = 0;
  timed_block(timed, [&] {
    auto corpus = load_corpus_dir(dir.str());
    auto a = auto_label(ck, support, corpus, 1);
    auto b = auto_label(ck, support, corpus, 2);
    labelled = a.size();
    for (std::size_t i = 0; i < a.size() && i < b.size(); ++i)
      differing += a[i].prediction.probs != b[i].prediction.probs || a[i].mask != b[i].mask ||
                   a[i].overlay != b[i].overlay;
    return 0;
  });
  expect(labelled == 20 && differing == 0, "auto_label reruns");

  Outcome o;
  o.pass = broken.empty();
  if (o.pass) {
    o.detail = "mining order, merge versioning, 20-image auto_label bit-identical";
  } else {
    for (const auto& b : broken) o.detail += b + "; ";
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  configure_allocator();
  const std::vector<Criterion> criteria = {
      {1, "validator exactness", 10, validator_exactness},
      {2, "split protocol", 5, split_protocol},
      {3, "metric oracles", 5, metric_oracles},
      {4, "architecture invariants", 120, architecture_invariants},
      {5, "gradient check", 300, gradient_check},
      {6, "overfit smoke", 300, overfit_smoke},
      {7, "desk-scale generalization", 1800, generalization},
      {8, "schedule and resume", 120, schedule_and_resume},
      {9, "workflow determinism", 120, workflow_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    double timed = 0.0;
    Outcome o;
    try {
      o = c.run(timed);
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const bool in_budget = timed <= c.budget_seconds;
    const bool pass = o.pass && in_budget;
    failures += !pass;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (pass ? "PASS" : "FAIL") << " - " << o.detail
              << " [" << fmt(timed, 3) << " s CPU, budget " << c.budget_seconds << " s"
              << (in_budget ? "" : ", OVER BUDGET") << "]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
