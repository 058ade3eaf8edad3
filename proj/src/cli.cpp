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

#include "fewseg/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <list>
#include <map>
#include <ostream>
#include <set>

#include <CLI11.hpp>

#include "fewseg/dataset.hpp"
#include "fewseg/error.hpp"
#include "fewseg/run_config.hpp"
#include "fewseg/synthetic.hpp"
#include "fewseg/training.hpp"
#include "fewseg/workflow.hpp"

namespace fs = std::filesystem;

namespace fewseg {

namespace {

const std::vector<std::string> kCommonKeys = {"dataset", "splits-file", "out", "checkpoint", "seed",
                                              "k-shot",  "n-query",     "workers"};
const std::vector<std::string> kModelKeys = {"n-stages", "base-channels", "channel-growth", "convs-per-stage",
                                             "max-channels", "relation-channels", "input-size"};
const std::vector<std::string> kTrainKeys = {"loss",        "lr0",        "fine-tune-lr", "halve-every",
                                             "n-episodes",  "checkpoint-every", "eval-every", "eval-episodes"};

std::vector<std::string> join(std::initializer_list<std::vector<std::string>> parts) {
  std::vector<std::string> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

struct Command {
  std::string name;
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string config_path;
  std::string positional;
  std::function<int(const RunConfig&, std::ostream&, std::ostream&)> run;

  RunConfig resolve() const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const auto& [key, opt] : options)
      if (opt->count() > 0) cfg.set(key, values.at(key));
    if (!positional.empty()) cfg.set("dataset", positional);
    return cfg;
  }
};

std::string require(const RunConfig& cfg, const std::string& key) {
  std::string v = cfg.get(key);
  if (v.empty()) throw InvalidArgument("missing-flag", "--" + key + " is required");
  return v;
}

fs::path out_dir(const RunConfig& cfg) {
  fs::path dir = require(cfg, "out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw IoError("unwritable", "cannot create output directory " + dir.string());
  return dir;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("unwritable", "cannot write " + path.string());
  return f;
}

void emit_config(const RunConfig& cfg, const fs::path& path) {
  auto f = open_out(path);
  cfg.write_resolved(f);
}

SplitSpec resolve_splits(const RunConfig& cfg, const DatasetRegistry& registry) {
  std::string path = cfg.get("splits-file");
  if (path.empty()) path = default_splits_path(registry.root_path(), cfg.get_uint("seed"));
  if (fs::exists(path)) return load_splits(path);
  return build_splits(registry, static_cast<int>(cfg.get_int("per-super-val")),
                      static_cast<int>(cfg.get_int("per-super-test")), cfg.get_uint("seed"));
}

const std::vector<std::string>& split_classes(const SplitSpec& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw InvalidArgument("bad-value", "split must be train, val or test, got '" + name + "'");
}

int workers(const RunConfig& cfg) {
  auto w = cfg.get_int("workers");
  if (w < 1) throw InvalidArgument("bad-value", "--workers must be at least 1");
  return static_cast<int>(w);
}

void write_metrics(const MetricsReport& report, const fs::path& path) {
  auto f = open_out(path);
  report.write_csv(f, true);
}

void write_trace(const std::vector<TraceRow>& trace, const fs::path& path) {
  auto f = open_out(path);
  write_trace_csv(trace, f);
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// Pairs of a support directory laid out like a class folder.
struct SupportSource {
  SupportSet set;
  std::vector<std::string> mask_paths;
};

SupportSource load_support(const RunConfig& cfg) {
  if (!cfg.get("support").empty()) {
    SupportSource s;
    s.set = load_support_manifest(cfg.get("support"));
    return s;
  }
  fs::path dir = fs::weakly_canonical(require(cfg, "support-dir"));
  for (const auto& listing : list_class_dirs(dir.parent_path().string())) {
    if (listing.name != dir.filename().string()) continue;
    SupportSource s;
    std::vector<ImageMaskPair> pairs;
    for (const auto& ref : listing.pairs) {
      ImageMaskPair p = load_pair(ref.image_path, ref.mask_path);
      p.source_path = fs::weakly_canonical(ref.image_path).string();
      pairs.push_back(std::move(p));
      s.mask_paths.push_back(fs::weakly_canonical(ref.mask_path).string());
    }
    s.set = SupportSet::initial(std::move(pairs));
    return s;
  }
  throw IoError("missing-file", "support directory not found: " + dir.string());
}

std::vector<AutoLabel> label_corpus(const RunConfig& cfg, const SupportSet& support,
                                    const std::vector<CorpusImage>& corpus) {
  Checkpoint ckpt = load_checkpoint(require(cfg, "checkpoint"));
  return auto_label(ckpt, support, corpus, workers(cfg));
}

// Masks in `dir` matched to corpus images by file stem.
std::vector<std::pair<std::string, std::string>> match_masks(const std::string& dir,
                                                             const std::vector<CorpusImage>& corpus) {
  std::map<std::string, std::string> by_stem;
  for (const auto& c : corpus) by_stem[stem_of(c.path)] = c.path;
  std::vector<std::pair<std::string, std::string>> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("unreadable-root", "not a readable directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto it = by_stem.find(f.stem().string());
    if (it == by_stem.end()) throw DataError("orphan-mask", "no corpus image for " + f.string());
    out.emplace_back(it->second, f.string());
  }
  return out;
}

// --- subcommands -----------------------------------------------------------

int run_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  ValidationReport report = validate_registry(require(cfg, "dataset"), workers(cfg));
  if (cfg.get("out").empty()) {
    report.write_csv(out);
  } else {
    fs::path dir = out_dir(cfg);
    auto f = open_out(dir / "validation.csv");
    report.write_csv(f);
    emit_config(cfg, dir / "config.txt");
  }
  err << report.error_count() << " errors, " << report.warning_count() << " warnings\n";
  return report.conforms() ? kExitOk : kExitValidation;
}

int run_splits(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  DatasetRegistry reg = DatasetRegistry::open(require(cfg, "dataset"));
  const auto seed = cfg.get_uint("seed");
  SplitSpec s = build_splits(reg, static_cast<int>(cfg.get_int("per-super-val")),
                             static_cast<int>(cfg.get_int("per-super-test")), seed);
  std::string path = cfg.get("splits-file");
  if (path.empty()) path = default_splits_path(reg.root_path(), seed);
  save_splits(s, path);
  emit_config(cfg, path + ".config.txt");
  auto pairs = [&](const std::vector<std::string>& classes) {
    std::size_t n = 0;
    for (const auto& c : classes) n += reg.class_entry(c).pairs.size();
    return n;
  };
  out << "split,classes,pairs\n"
      << "train," << s.train.size() << ',' << pairs(s.train) << '\n'
      << "val," << s.val.size() << ',' << pairs(s.val) << '\n'
      << "test," << s.test.size() << ',' << pairs(s.test) << '\n';
  return kExitOk;
}

int run_stats(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  DatasetStats stats = compute_stats(DatasetRegistry::open(require(cfg, "dataset")));
  if (cfg.get("out").empty()) {
    write_stats_csv(stats, out);
  } else {
    fs::path dir = out_dir(cfg);
    auto f = open_out(dir / "stats.csv");
    write_stats_csv(stats, f);
    emit_config(cfg, dir / "config.txt");
  }
  return kExitOk;
}

int run_synth(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  SyntheticOptions o;
  o.n_classes = static_cast<int>(cfg.get_int("n-classes"));
  o.seed = cfg.get_uint("seed");
  o.images_per_class = static_cast<int>(cfg.get_int("images-per-class"));
  o.distractor_probability = cfg.get_double("distractor-probability");
  fs::path dir = out_dir(cfg);
  DatasetRegistry reg = build_synthetic_dataset(o, dir.string());
  emit_config(cfg, dir / "config.txt");
  out << reg.class_names().size() << " classes, " << reg.total_pairs() << " pairs\n";
  return kExitOk;
}

int run_binarize(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  fs::path src = require(cfg, "labels-dir");
  const int target = static_cast<int>(cfg.get_int("target-class"));
  std::vector<fs::path> label_files;
  std::error_code ec;
  if (!fs::is_directory(src, ec)) throw IoError("unreadable-root", "not a readable directory: " + src.string());
  for (const auto& e : fs::directory_iterator(src)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > 11 && name.ends_with(".labels.png")) label_files.push_back(e.path());
  }
  std::sort(label_files.begin(), label_files.end());
  std::vector<LabeledImage> samples;
  for (const auto& lf : label_files) {
    const std::string stem = lf.filename().string().substr(0, lf.filename().string().size() - 11);
    fs::path image;
    for (const char* ext : {".jpg", ".png"})
      if (fs::exists(src / (stem + ext))) {
        image = src / (stem + ext);
        break;
      }
    if (image.empty()) throw IoError("missing-file", "no image for label map " + lf.string());
    samples.push_back({read_rgb(image.string()), read_labels(lf.string()), image.string()});
  }
  BinarizedClass result = binarize_multiclass_dataset(samples, target);
  fs::path dir = out_dir(cfg);
  for (std::size_t i = 0; i < result.pairs.size(); ++i) {
    const std::string k = std::to_string(i + 1);
    write_pair(result.pairs[i], (dir / (k + ".jpg")).string(), (dir / (k + ".png")).string());
  }
  auto f = open_out(dir / "excluded.csv");
  f << "source_path,reason\n";
  for (const auto& e : result.excluded) f << e.source_path << ',' << e.reason << '\n';
  emit_config(cfg, dir / "config.txt");
  out << result.pairs.size() << " pairs, " << result.excluded.size() << " excluded\n";
  return kExitOk;
}

int run_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  ModelConfig model = cfg.model_config();
  TrainConfig train_cfg = cfg.train_config();
  DatasetRegistry reg = DatasetRegistry::open(require(cfg, "dataset"));
  SplitSpec split = resolve_splits(cfg, reg);
  fs::path dir = out_dir(cfg);
  emit_config(cfg, dir / "config.txt");
  if (train_cfg.checkpoint_every > 0) train_cfg.checkpoint_dir = (dir / "checkpoints").string();
  TrainOptions opts;
  std::optional<Checkpoint> resume;
  if (!cfg.get("resume").empty()) {
    resume = load_checkpoint(cfg.get("resume"));
    opts.resume = &*resume;
  }
  const std::uint64_t report_every = std::max<std::uint64_t>(1, train_cfg.n_episodes / 20);
  opts.on_episode = [&](const TraceRow& row) {
    if ((row.episode + 1) % report_every == 0) err << "episode " << row.episode + 1 << " loss " << row.loss << '\n';
  };
  TrainResult result = train(reg, split, model, train_cfg, opts);
  save_checkpoint(result.checkpoint, (dir / "checkpoint.bin").string());
  write_trace(result.trace, dir / "trace.csv");
  auto v = open_out(dir / "validation.csv");
  v.precision(17);
  v << "episode,mean_iou\n";
  for (const auto& p : result.validation) v << p.episode << ',' << p.mean_iou << '\n';
  out << "trained " << result.trace.size() << " episodes; checkpoint " << (dir / "checkpoint.bin").string() << '\n';
  return kExitOk;
}

int run_eval(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  DatasetRegistry reg = DatasetRegistry::open(require(cfg, "dataset"));
  SplitSpec split = resolve_splits(cfg, reg);
  Checkpoint ckpt = load_checkpoint(require(cfg, "checkpoint"));
  fs::path dir = out_dir(cfg);
  emit_config(cfg, dir / "config.txt");
  MetricsReport r = evaluate(ckpt, reg, split_classes(split, cfg.get("split")), static_cast<int>(cfg.get_int("k-shot")),
                             static_cast<int>(cfg.get_int("eval-episodes")), cfg.get_uint("seed"));
  write_metrics(r, dir / "metrics.csv");
  out << "mean_iou " << r.global.mean_iou << '\n';
  return kExitOk;
}

int run_ablate(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  const ModelConfig model = cfg.model_config();
  TrainConfig t = cfg.train_config();
  const std::vector<int> k_values = cfg.get_int_list("k-values");
  DatasetRegistry reg = DatasetRegistry::open(require(cfg, "dataset"));
  SplitSpec split = resolve_splits(cfg, reg);
  fs::path dir = out_dir(cfg);
  emit_config(cfg, dir / "config.txt");
  if (t.checkpoint_every > 0) t.checkpoint_dir = (dir / "checkpoints").string();
  AblationResult r = kshot_ablation(reg, split, model, t, k_values);
  for (std::size_t i = 0; i < r.k_values.size(); ++i) {
    const std::string k = std::to_string(r.k_values[i]);
    write_metrics(r.reports[i], dir / ("metrics-k" + k + ".csv"));
    write_trace(r.runs[i].trace, dir / ("trace-k" + k + ".csv"));
  }
  auto f = open_out(dir / "comparison.csv");
  r.write_comparison_csv(f);
  r.write_comparison_csv(out);
  return kExitOk;
}

int run_protocol(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  auto roots = cfg.get_list("stages");
  if (roots.empty()) throw InvalidArgument("missing-flag", "--stages is required");
  auto eval_roots = cfg.get_list("eval-datasets");
  const ModelConfig model = cfg.model_config();
  TrainConfig t = cfg.train_config();
  fs::path dir = out_dir(cfg);
  emit_config(cfg, dir / "config.txt");
  std::list<DatasetRegistry> registries;
  auto stage_of = [&](const std::string& root) {
    registries.push_back(DatasetRegistry::open(root));
    RunConfig local = cfg;
    local.set("splits-file", "");
    return ProtocolStage{fs::path(root).filename().string(), &registries.back(), resolve_splits(local, registries.back())};
  };
  std::vector<ProtocolStage> stages, evals;
  for (const auto& r : roots) stages.push_back(stage_of(r));
  for (const auto& r : eval_roots) evals.push_back(stage_of(r));
  if (t.checkpoint_every > 0) t.checkpoint_dir = (dir / "checkpoints").string();
  ProtocolResult r = cross_dataset_protocol(stages, evals, model, t);
  for (std::size_t i = 0; i < r.stages.size(); ++i)
    write_trace(r.stages[i].trace, dir / ("trace-stage" + std::to_string(i + 1) + ".csv"));
  save_checkpoint(r.stages.back().checkpoint, (dir / "checkpoint.bin").string());
  for (std::size_t i = 0; i < r.reports.size(); ++i) {
    write_metrics(r.reports[i], dir / ("metrics-" + r.eval_names[i] + ".csv"));
    out << r.eval_names[i] << " mean_iou " << r.reports[i].global.mean_iou << '\n';
  }
  return kExitOk;
}

int run_label(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  SupportSource support = load_support(cfg);
  std::vector<CorpusImage> corpus = load_corpus_dir(require(cfg, "corpus"));
  std::vector<AutoLabel> labels = label_corpus(cfg, support.set, corpus);
  fs::path dir = out_dir(cfg);
  emit_config(cfg, dir / "config.txt");
  for (const char* sub : {"masks", "overlays", "probs"}) fs::create_directories(dir / sub);
  auto csv = open_out(dir / "labels.csv");
  csv.precision(17);
  csv << "image_path,mask_path,foreground_fraction,mean_margin\n";
  for (const auto& l : labels) {
    const std::string stem = stem_of(l.image_path);
    Grid<std::uint8_t> m(l.mask.rows, l.mask.cols);
    std::size_t fg = 0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      m.values[i] = l.mask.values[i] ? 255 : 0;
      fg += l.mask.values[i];
    }
    Grid<std::uint16_t> p(l.prediction.probs.rows, l.prediction.probs.cols);
    for (std::size_t i = 0; i < p.size(); ++i)
      p.values[i] = static_cast<std::uint16_t>(std::lround(std::clamp(l.prediction.probs.values[i], 0.0f, 1.0f) * 65535.0));
    const fs::path mask_path = dir / "masks" / (stem + ".png");
    write_gray(mask_path.string(), m);
    write_rgb((dir / "overlays" / (stem + ".png")).string(), l.overlay);
    write_gray16((dir / "probs" / (stem + ".png")).string(), p);
    csv << l.image_path << ',' << mask_path.string() << ',' << static_cast<double>(fg) / m.size() << ','
        << mean_margin(l.prediction) << '\n';
  }
  if (!support.mask_paths.empty()) save_support_manifest(support.set, support.mask_paths, (dir / "support-v1.txt").string());
  out << labels.size() << " images labeled\n";
  return kExitOk;
}

int run_mine(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  SupportSource support = load_support(cfg);
  std::vector<CorpusImage> corpus = load_corpus_dir(require(cfg, "corpus"));
  std::vector<AutoLabel> labels = label_corpus(cfg, support.set, corpus);
  const auto n = cfg.get_int("n-hard");
  if (n < 0) throw InvalidArgument("bad-value", "--n-hard must be >= 0");
  std::optional<std::vector<Mask>> truths;
  if (!cfg.get("truths").empty()) {
    auto matched = match_masks(cfg.get("truths"), corpus);
    if (matched.size() != corpus.size())
      throw InvalidArgument("truth-count", "expected one truth mask per corpus image");
    truths.emplace();
    for (const auto& [image, mask] : matched) truths->push_back(load_pair(image, mask).mask);
  }
  std::optional<std::span<const Mask>> truth_view;
  if (truths) truth_view = std::span<const Mask>(*truths);
  auto cases = mine_hard_cases(labels, truth_view, static_cast<std::size_t>(n));
  fs::path dir = out_dir(cfg);
  emit_config(cfg, dir / "config.txt");
  auto f = open_out(dir / "hard_cases.csv");
  write_hard_case_manifest(cases, f);
  write_hard_case_manifest(cases, out);
  return kExitOk;
}

int run_merge(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  SupportSet old = load_support_manifest(require(cfg, "support"));
  std::vector<CorpusImage> corpus = load_corpus_dir(require(cfg, "corpus"));
  std::vector<ImageMaskPair> corrected;
  for (const auto& [image, mask] : match_masks(require(cfg, "corrections"), corpus)) {
    ImageMaskPair p = load_pair(image, mask);
    p.source_path = fs::weakly_canonical(image).string();
    corrected.push_back(std::move(p));
  }
  SupportSet next = merge_support_set(old, corrected);
  fs::path dir = out_dir(cfg);
  emit_config(cfg, dir / "config.txt");
  const std::string tag = "support-v" + std::to_string(next.version);
  fs::create_directories(dir / tag);
  std::vector<std::string> mask_paths;
  for (std::size_t i = 0; i < next.pairs.size(); ++i) {
    Grid<std::uint8_t> m(next.pairs[i].mask.rows, next.pairs[i].mask.cols);
    for (std::size_t j = 0; j < m.size(); ++j) m.values[j] = next.pairs[i].mask.values[j] ? 255 : 0;
    const fs::path p = fs::absolute(dir / tag / (std::to_string(i + 1) + ".png"));
    write_gray(p.string(), m);
    mask_paths.push_back(p.string());
  }
  save_support_manifest(next, mask_paths, (dir / (tag + ".txt")).string());
  out << tag << ": " << next.pairs.size() << " pairs\n";
  return kExitOk;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Few-shot binary segmentation toolkit", "fewseg"};
  app.require_subcommand(1, 1);
  std::list<Command> commands;

  auto add = [&](const std::string& name, const std::string& help, std::vector<std::string> keys,
                 std::function<int(const RunConfig&, std::ostream&, std::ostream&)> run, bool positional_root) {
    Command& c = commands.emplace_back();
    c.name = name;
    c.run = std::move(run);
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", c.config_path, "key = value config file");
    if (positional_root) c.app->add_option("root", c.positional, "dataset root (same as --dataset)");
    std::set<std::string> seen;
    for (const auto& key : keys) {
      if (!seen.insert(key).second) continue;
      std::string help_text;
      for (const auto& k : config_keys())
        if (k.name == key) help_text = k.help;
      c.values[key];
      c.options[key] = c.app->add_option("--" + key, c.values[key], help_text);
    }
  };

  add("validate", "check a corpus against the collection rules", kCommonKeys, run_validate, true);
  add("splits", "draw train/val/test classes per superclass",
      join({kCommonKeys, {"per-super-val", "per-super-test"}}), run_splits, true);
  add("stats", "class counts and superclass distribution", kCommonKeys, run_stats, true);
  add("synth", "write a synthetic shapes corpus",
      join({kCommonKeys, {"n-classes", "images-per-class", "distractor-probability"}}), run_synth, false);
  add("binarize", "turn one class of a multi-class corpus into binary pairs",
      join({kCommonKeys, {"labels-dir", "target-class"}}), run_binarize, false);
  add("train", "episodic training",
      join({kCommonKeys, kModelKeys, kTrainKeys, {"resume", "per-super-val", "per-super-test"}}), run_train, false);
  add("eval", "mean IoU of a checkpoint on a split",
      join({kCommonKeys, {"split", "eval-episodes", "per-super-val", "per-super-test"}}), run_eval, false);
  add("ablate-k", "train and evaluate once per shot count",
      join({kCommonKeys, kModelKeys, kTrainKeys, {"k-values", "per-super-val", "per-super-test"}}), run_ablate,
      false);
  add("protocol", "staged training across corpora, then evaluation",
      join({kCommonKeys, kModelKeys, kTrainKeys, {"stages", "eval-datasets", "per-super-val", "per-super-test"}}),
      run_protocol, false);
  add("label", "segment a corpus of a novel class from a support set",
      join({kCommonKeys, {"support", "support-dir", "corpus"}}), run_label, false);
  add("mine", "rank labeled images by difficulty",
      join({kCommonKeys, {"support", "support-dir", "corpus", "truths", "n-hard"}}), run_mine, false);
  add("merge-support", "fold corrected masks into the next support version",
      join({kCommonKeys, {"support", "corpus", "corrections"}}), run_merge, false);

  if (!args.empty() && !args[0].empty() && args[0][0] != '-' &&
      std::none_of(commands.begin(), commands.end(), [&](const Command& c) { return c.name == args[0]; })) {
    err << "error: unknown subcommand '" << args[0] << "'\n\n" << app.help();
    return kExitUsage;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  for (auto& c : commands) {
    if (!c.app->parsed()) continue;
    try {
      RunConfig cfg = c.resolve();
      return c.run(cfg, out, err);
    } catch (const InvalidArgument& e) {
      err << "error [" << e.code() << "]: " << e.what() << '\n';
      return kExitUsage;
    } catch (const Error& e) {
      err << "error [" << e.code() << "]: " << e.what() << '\n';
      return kExitValidation;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kExitValidation;
    }
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace fewseg
