// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Config-driven pipelines: train, evaluate, enhance, aggregate, ablate.
// Every run writes a self-describing directory; see README.md for the layout.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "psla/aggregate.hpp"
#include "psla/corpus.hpp"
#include "psla/error.hpp"
#include "psla/labelfix.hpp"
#include "psla/metrics.hpp"
#include "psla/model.hpp"
#include "psla/ontology.hpp"
#include "psla/rng.hpp"
#include "psla/sampler.hpp"
#include "psla/text.hpp"
#include "psla/train.hpp"

namespace psla {

namespace fs = std::filesystem;

/// Where a corpus comes from: a directory on disk or a synthetic spec. An
/// optional label file replaces the stored labels (e.g. an enhanced set).
struct CorpusSource {
  std::optional<fs::path> path;
  SynthSpec synth;
  std::optional<fs::path> labels;
  bool seeds_pinned = false;  ///< synthetic seeds were given explicitly
};

struct EnhanceConfig {
  fs::path teacher_run;
  ThresholdPolicy policy = ThresholdPolicy::mean;
  double fixed_threshold = 0.5;
  RepairMode mode = RepairMode::both;
  bool strict = true;
};

/// Post-training aggregation. `weight_avg` and `ensemble` choose which
/// aggregate is the deployed number; all of them are always reported.
struct AggregateConfig {
  std::optional<std::size_t> start_epoch;  ///< default: first epoch at base_lr / 4
  bool weight_avg = true;
  bool ensemble = true;
  bool sweep = false;  ///< also write the start-epoch sweep
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  fs::path output_dir = "runs/default";
  CorpusSource train_corpus;
  CorpusSource eval_corpus;
  ModelConfig model;  ///< input shape and class count are taken from the corpus
  std::optional<fs::path> init;
  AugmentConfig augment;
  TrainConfig train;
  std::string regime = "balanced";
  std::optional<fs::path> ontology;
  std::optional<EnhanceConfig> enhance;
  AggregateConfig aggregate;
};

/// Decay start implied by a schedule regime: 35 for balanced, 10 for full.
inline std::size_t regime_decay_start(std::string_view regime) {
  if (regime == "balanced") return 35;
  if (regime == "full") return 10;
  throw Error(ErrorKind::config, "unknown schedule regime '" + std::string(regime) + "' (balanced|full)");
}

// ---------------------------------------------------------------------------
// YAML parsing with line-level diagnostics

namespace detail {

class ConfigReader {
 public:
  ConfigReader(std::string source, fs::path base_dir) : source_(std::move(source)), base_(std::move(base_dir)) {}

  [[noreturn]] void fail(const YAML::Mark& mark, const std::string& msg) const {
    std::string where = source_;
    if (!mark.is_null()) where += ":" + std::to_string(mark.line + 1);
    throw Error(ErrorKind::config, where + ": " + msg);
  }

  /// A mapping section; rejects unknown keys.
  class Section {
   public:
    Section(const ConfigReader& r, YAML::Node node, std::string name, std::initializer_list<std::string_view> keys)
        : r_(r), node_(std::move(node)), name_(std::move(name)) {
      if (!node_.IsMap()) r_.fail(node_.Mark(), "section '" + name_ + "' must be a mapping");
      for (const auto& kv : node_) {
        const auto key = kv.first.Scalar();
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
          r_.fail(kv.first.Mark(), "unknown key '" + key + "'" + (name_.empty() ? "" : " in section '" + name_ + "'"));
      }
    }

    bool has(const char* key) const { return static_cast<bool>(node_[key]); }
    YAML::Node node(const char* key) const { return node_[key]; }
    const YAML::Mark mark(const char* key) const { return has(key) ? node_[key].Mark() : node_.Mark(); }
    [[noreturn]] void fail(const char* key, const std::string& msg) const { r_.fail(mark(key), msg); }

    Section section(const char* key, std::initializer_list<std::string_view> keys) const {
      return Section(r_, node_[key], name_.empty() ? key : name_ + "." + key, keys);
    }

    std::string str(const char* key, std::string fallback) const {
      if (!has(key)) return fallback;
      return scalar(key);
    }

    double real(const char* key, double fallback) const {
      if (!has(key)) return fallback;
      const auto v = text::parse_real(scalar(key));
      if (!v || !std::isfinite(*v)) fail(key, "'" + std::string(key) + "' must be a finite number");
      return *v;
    }

    template <class Int>
    Int integer(const char* key, Int fallback) const {
      if (!has(key)) return fallback;
      const auto v = text::parse_int<Int>(scalar(key));
      if (!v) fail(key, "'" + std::string(key) + "' must be a non-negative integer");
      return *v;
    }

    bool flag(const char* key, bool fallback) const {
      if (!has(key)) return fallback;
      const auto s = scalar(key);
      if (s == "true") return true;
      if (s == "false") return false;
      fail(key, "'" + std::string(key) + "' must be true or false");
    }

    /// A path, resolved against the config file's directory.
    fs::path path(const char* key) const {
      const fs::path p = scalar(key);
      return p.is_absolute() ? p : r_.base_ / p;
    }

   private:
    std::string scalar(const char* key) const {
      const auto n = node_[key];
      if (!n.IsScalar()) fail(key, "'" + std::string(key) + "' must be a scalar");
      return n.Scalar();
    }

    const ConfigReader& r_;
    YAML::Node node_;
    std::string name_;
  };

 private:
  std::string source_;
  fs::path base_;
};

inline CorpusSource parse_corpus_source(const ConfigReader::Section& s, std::uint64_t seed, std::string_view stream) {
  CorpusSource out;
  if (s.has("path") == s.has("synthetic")) s.fail("path", "a corpus needs exactly one of 'path' or 'synthetic'");
  if (s.has("path")) {
    out.path = s.path("path");
    if (!fs::is_directory(*out.path)) s.fail("path", "corpus directory " + out.path->string() + " does not exist");
  } else {
    const auto y = s.section("synthetic", {"num_classes", "num_samples", "imbalance_ratio", "cooccurrence", "frames",
                                           "bins", "signal_strength", "seed", "pattern_seed"});
    auto& sp = out.synth;
    sp.num_classes = y.integer<std::size_t>("num_classes", sp.num_classes);
    sp.num_samples = y.integer<std::size_t>("num_samples", sp.num_samples);
    sp.imbalance_ratio = y.real("imbalance_ratio", sp.imbalance_ratio);
    sp.cooccurrence = y.real("cooccurrence", sp.cooccurrence);
    sp.shape.frames = y.integer<std::size_t>("frames", sp.shape.frames);
    sp.shape.bins = y.integer<std::size_t>("bins", sp.shape.bins);
    sp.planted_signal_strength = y.real("signal_strength", sp.planted_signal_strength);
    if (y.has("seed") != y.has("pattern_seed")) y.fail("seed", "pin both 'seed' and 'pattern_seed' or neither");
    out.seeds_pinned = y.has("seed");
    sp.seed = y.integer<std::uint64_t>("seed", derive_seed(seed, stream));
    sp.pattern_seed = y.integer<std::uint64_t>("pattern_seed", derive_seed(seed, "patterns"));
    try {
      validate(sp);
    } catch (const Error& e) {
      y.fail("num_classes", e.what());
    }
  }
  if (s.has("labels")) {
    out.labels = s.path("labels");
    if (!fs::is_regular_file(*out.labels)) s.fail("labels", "label file " + out.labels->string() + " does not exist");
  }
  return out;
}

/// Shape and class count of a corpus source without loading features.
inline std::pair<FeatureShape, std::size_t> source_dimensions(const CorpusSource& s) {
  if (!s.path) return {s.synth.shape, s.synth.num_classes};
  const auto m = read_corpus_manifest(*s.path);
  return {m.shape, m.class_names.size()};
}

}  // namespace detail

/// Parses a YAML experiment config. `source` names the text in diagnostics;
/// relative paths resolve against `base_dir`.
inline ExperimentConfig parse_experiment_config(const std::string& yaml, const std::string& source = "<config>",
                                                const fs::path& base_dir = ".") {
  detail::ConfigReader reader(source, base_dir);
  YAML::Node root;
  try {
    root = YAML::Load(yaml);
  } catch (const YAML::Exception& e) {
    reader.fail(e.mark, e.msg);
  }
  using S = detail::ConfigReader::Section;
  const S top(reader, root, "",
              {"seed", "output_dir", "corpus", "model", "augment", "train", "ontology", "enhance", "aggregate"});
  ExperimentConfig c;
  c.seed = top.integer<std::uint64_t>("seed", 0);
  if (top.has("output_dir")) c.output_dir = top.path("output_dir");

  if (!top.has("corpus")) reader.fail(root.Mark(), "missing required section 'corpus'");
  const auto corpus = top.section("corpus", {"train", "eval"});
  if (!corpus.has("train") || !corpus.has("eval")) corpus.fail("train", "corpus needs both 'train' and 'eval'");
  const std::initializer_list<std::string_view> corpus_keys{"path", "synthetic", "labels"};
  c.train_corpus = detail::parse_corpus_source(corpus.section("train", corpus_keys), c.seed, "synth");
  c.eval_corpus = detail::parse_corpus_source(corpus.section("eval", corpus_keys), c.seed, "synth-eval");
  const auto [shape, classes] = detail::source_dimensions(c.train_corpus);
  if (detail::source_dimensions(c.eval_corpus) != std::pair{shape, classes})
    corpus.fail("eval", "train and eval corpora differ in feature shape or class count");

  if (top.has("model")) {
    const auto m = top.section("model", {"kind", "stride1", "stride2", "hidden_dim", "embed_dim", "heads", "init"});
    try {
      c.model.kind = parse_model_kind(m.str("kind", "attention"));
    } catch (const Error& e) {
      m.fail("kind", e.what());
    }
    c.model.stride1 = m.integer<std::size_t>("stride1", c.model.stride1);
    c.model.stride2 = m.integer<std::size_t>("stride2", c.model.stride2);
    c.model.hidden_dim = m.integer<std::size_t>("hidden_dim", c.model.hidden_dim);
    c.model.embed_dim = m.integer<std::size_t>("embed_dim", c.model.embed_dim);
    c.model.num_heads = m.integer<std::size_t>("heads", c.model.num_heads);
    if (m.has("init")) {
      c.init = m.path("init");
      if (!fs::is_regular_file(*c.init)) m.fail("init", "initial checkpoint " + c.init->string() + " does not exist");
    }
  }
  c.model.input = shape;
  c.model.num_classes = classes;
  try {
    validate(c.model);
  } catch (const Error& e) {
    top.fail("model", e.what());
  }

  if (top.has("augment")) {
    const auto a = top.section("augment", {"balanced", "freq_mask", "time_mask", "mixup_rate", "alpha"});
    c.augment.balanced = a.flag("balanced", c.augment.balanced);
    c.augment.freq_mask = a.integer<std::size_t>("freq_mask", c.augment.freq_mask);
    c.augment.time_mask = a.integer<std::size_t>("time_mask", c.augment.time_mask);
    c.augment.mixup_rate = a.real("mixup_rate", c.augment.mixup_rate);
    c.augment.alpha = a.real("alpha", c.augment.alpha);
  }
  try {
    validate(c.augment, shape);
  } catch (const Error& e) {
    top.fail("augment", e.what());
  }

  if (top.has("train")) {
    const auto t = top.section("train", {"epochs", "batch_size", "lr", "warmup_iters", "regime", "decay_start_epoch",
                                         "decay_period", "decay_factor", "report_last_k"});
    c.train.epochs = t.integer<std::size_t>("epochs", c.train.epochs);
    c.train.batch_size = t.integer<std::size_t>("batch_size", c.train.batch_size);
    c.train.report_last_k = t.integer<std::size_t>("report_last_k", c.train.report_last_k);
    auto& s = c.train.schedule;
    s.base_lr = t.real("lr", s.base_lr);
    s.warmup_iters = t.integer<std::size_t>("warmup_iters", s.warmup_iters);
    c.regime = t.str("regime", c.regime);
    try {
      s.decay_start_epoch = regime_decay_start(c.regime);
    } catch (const Error& e) {
      t.fail("regime", e.what());
    }
    s.decay_start_epoch = t.integer<std::size_t>("decay_start_epoch", s.decay_start_epoch);
    s.decay_period = t.integer<std::size_t>("decay_period", s.decay_period);
    s.decay_factor = t.real("decay_factor", s.decay_factor);
  }
  c.train.seed = c.seed;
  try {
    validate(c.train);
  } catch (const Error& e) {
    top.fail("train", e.what());
  }

  if (top.has("ontology")) {
    c.ontology = top.path("ontology");
    if (!fs::is_regular_file(*c.ontology))
      top.fail("ontology", "ontology file " + c.ontology->string() + " does not exist");
  }
  if (top.has("enhance")) {
    const auto e = top.section("enhance", {"teacher_run", "policy", "fixed_threshold", "mode", "strict"});
    if (!c.ontology) top.fail("enhance", "label enhancement requires an 'ontology'");
    if (!e.has("teacher_run")) top.fail("enhance", "label enhancement requires 'teacher_run'");
    EnhanceConfig ec;
    ec.teacher_run = e.path("teacher_run");
    try {
      ec.policy = parse_threshold_policy(e.str("policy", "mean"));
      ec.mode = parse_repair_mode(e.str("mode", "both"));
    } catch (const Error& err) {
      e.fail("policy", err.what());
    }
    ec.fixed_threshold = e.real("fixed_threshold", ec.fixed_threshold);
    ec.strict = e.flag("strict", ec.strict);
    c.enhance = ec;
  }
  if (top.has("aggregate")) {
    const auto g = top.section("aggregate", {"start_epoch", "weight_avg", "ensemble", "sweep"});
    if (g.has("start_epoch")) {
      c.aggregate.start_epoch = g.integer<std::size_t>("start_epoch", 1);
      if (*c.aggregate.start_epoch < 1 || *c.aggregate.start_epoch > c.train.epochs)
        g.fail("start_epoch", "start_epoch must lie in [1, epochs]");
    }
    c.aggregate.weight_avg = g.flag("weight_avg", true);
    c.aggregate.ensemble = g.flag("ensemble", true);
    c.aggregate.sweep = g.flag("sweep", false);
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorKind::config, "config file " + path.string() + " does not exist");
  return parse_experiment_config(detail::read_file(path), path.string(), fs::absolute(path).parent_path());
}

/// Canonical YAML for a config: every field explicit, paths absolute. This
/// is the run snapshot and the input of the config hash.
inline std::string to_yaml(const ExperimentConfig& c) {
  YAML::Emitter out;
  auto real = [](double v) { return text::format_real(v); };
  auto path = [](const fs::path& p) { return fs::absolute(p).lexically_normal().string(); };
  auto corpus = [&](const CorpusSource& s) {
    out << YAML::BeginMap;
    if (s.path) {
      out << YAML::Key << "path" << YAML::Value << path(*s.path);
    } else {
      const auto& sp = s.synth;
      out << YAML::Key << "synthetic" << YAML::Value << YAML::BeginMap;
      out << YAML::Key << "num_classes" << YAML::Value << sp.num_classes;
      out << YAML::Key << "num_samples" << YAML::Value << sp.num_samples;
      out << YAML::Key << "imbalance_ratio" << YAML::Value << real(sp.imbalance_ratio);
      out << YAML::Key << "cooccurrence" << YAML::Value << real(sp.cooccurrence);
      out << YAML::Key << "frames" << YAML::Value << sp.shape.frames;
      out << YAML::Key << "bins" << YAML::Value << sp.shape.bins;
      out << YAML::Key << "signal_strength" << YAML::Value << real(sp.planted_signal_strength);
      out << YAML::Key << "seed" << YAML::Value << sp.seed;
      out << YAML::Key << "pattern_seed" << YAML::Value << sp.pattern_seed;
      out << YAML::EndMap;
    }
    if (s.labels) out << YAML::Key << "labels" << YAML::Value << path(*s.labels);
    out << YAML::EndMap;
  };

  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << c.seed;
  out << YAML::Key << "output_dir" << YAML::Value << path(c.output_dir);
  out << YAML::Key << "corpus" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "train" << YAML::Value;
  corpus(c.train_corpus);
  out << YAML::Key << "eval" << YAML::Value;
  corpus(c.eval_corpus);
  out << YAML::EndMap;

  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << std::string(to_string(c.model.kind));
  out << YAML::Key << "stride1" << YAML::Value << c.model.stride1;
  out << YAML::Key << "stride2" << YAML::Value << c.model.stride2;
  out << YAML::Key << "hidden_dim" << YAML::Value << c.model.hidden_dim;
  out << YAML::Key << "embed_dim" << YAML::Value << c.model.embed_dim;
  out << YAML::Key << "heads" << YAML::Value << c.model.num_heads;
  if (c.init) out << YAML::Key << "init" << YAML::Value << path(*c.init);
  out << YAML::EndMap;

  out << YAML::Key << "augment" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "balanced" << YAML::Value << c.augment.balanced;
  out << YAML::Key << "freq_mask" << YAML::Value << c.augment.freq_mask;
  out << YAML::Key << "time_mask" << YAML::Value << c.augment.time_mask;
  out << YAML::Key << "mixup_rate" << YAML::Value << real(c.augment.mixup_rate);
  out << YAML::Key << "alpha" << YAML::Value << real(c.augment.alpha);
  out << YAML::EndMap;

  const auto& s = c.train.schedule;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "epochs" << YAML::Value << c.train.epochs;
  out << YAML::Key << "batch_size" << YAML::Value << c.train.batch_size;
  out << YAML::Key << "lr" << YAML::Value << real(s.base_lr);
  out << YAML::Key << "warmup_iters" << YAML::Value << s.warmup_iters;
  out << YAML::Key << "regime" << YAML::Value << c.regime;
  out << YAML::Key << "decay_start_epoch" << YAML::Value << s.decay_start_epoch;
  out << YAML::Key << "decay_period" << YAML::Value << s.decay_period;
  out << YAML::Key << "decay_factor" << YAML::Value << real(s.decay_factor);
  out << YAML::Key << "report_last_k" << YAML::Value << c.train.report_last_k;
  out << YAML::EndMap;

  if (c.ontology) out << YAML::Key << "ontology" << YAML::Value << path(*c.ontology);
  if (c.enhance) {
    const auto& e = *c.enhance;
    out << YAML::Key << "enhance" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "teacher_run" << YAML::Value << path(e.teacher_run);
    out << YAML::Key << "policy" << YAML::Value << std::string(to_string(e.policy));
    out << YAML::Key << "fixed_threshold" << YAML::Value << real(e.fixed_threshold);
    out << YAML::Key << "mode" << YAML::Value << std::string(to_string(e.mode));
    out << YAML::Key << "strict" << YAML::Value << e.strict;
    out << YAML::EndMap;
  }
  out << YAML::Key << "aggregate" << YAML::Value << YAML::BeginMap;
  if (c.aggregate.start_epoch) out << YAML::Key << "start_epoch" << YAML::Value << *c.aggregate.start_epoch;
  out << YAML::Key << "weight_avg" << YAML::Value << c.aggregate.weight_avg;
  out << YAML::Key << "ensemble" << YAML::Value << c.aggregate.ensemble;
  out << YAML::Key << "sweep" << YAML::Value << c.aggregate.sweep;
  out << YAML::EndMap;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

/// FNV-1a of the canonical snapshot, as 16 hex digits.
inline std::string config_hash(const std::string& snapshot) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_name(snapshot)));
  return buf;
}

/// The config under another master seed. Training streams follow the new
/// seed; synthetic corpora do too unless their seeds were pinned.
inline ExperimentConfig with_master_seed(ExperimentConfig c, std::uint64_t seed) {
  c.seed = c.train.seed = seed;
  if (!c.train_corpus.path && !c.train_corpus.seeds_pinned) {
    c.train_corpus.synth.seed = derive_seed(seed, "synth");
    c.train_corpus.synth.pattern_seed = derive_seed(seed, "patterns");
  }
  if (!c.eval_corpus.path && !c.eval_corpus.seeds_pinned) {
    c.eval_corpus.synth.seed = derive_seed(seed, "synth-eval");
    c.eval_corpus.synth.pattern_seed = derive_seed(seed, "patterns");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Shared plumbing

using LogFn = std::function<void(const std::string&)>;

/// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw Error(ErrorKind::io, "run directory " + dir.string() + " is locked (remove " + path_.string() +
                                           " if no other process owns it)");
    std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
    std::fclose(f);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

inline void write_json(const fs::path& path, const nlohmann::json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

inline nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::malformed_manifest, path.string() + ": " + e.what());
  }
}

/// Loads a corpus and applies a label override, aligning rows by sample id.
inline MultiLabelCorpus load_corpus(const CorpusSource& s) {
  auto corpus = s.path ? read_corpus(*s.path) : generate_synthetic(s.synth);
  if (!s.labels) return corpus;
  const auto rows = read_label_file(*s.labels, corpus.classes().names);
  std::unordered_map<std::string, const LabelSet*> by_id;
  for (const auto& [id, y] : rows) by_id[id] = &y;
  LabelMatrix labels;
  for (const auto& sample : corpus.samples()) {
    const auto it = by_id.find(sample.id);
    if (it == by_id.end())
      throw Error(ErrorKind::malformed_manifest, s.labels->string() + ": no labels for sample " + sample.id);
    labels.push_back(*it->second);
  }
  return corpus.with_labels(labels);
}

inline std::vector<std::string> sample_ids(const MultiLabelCorpus& corpus) {
  std::vector<std::string> ids;
  for (const auto& s : corpus.samples()) ids.push_back(s.id);
  return ids;
}

inline std::string epoch_tag(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03zu", epoch);
  return buf;
}

/// Per-sample score table: header `id,<class>...`, one row per sample.
struct ScoreTable {
  std::vector<std::string> ids;
  std::vector<std::string> class_names;
  Matrix<double> scores;
};

inline void write_scores_csv(const fs::path& path, const ScoreTable& t) {
  auto out = detail::open_out(path);
  out << "id";
  for (const auto& n : t.class_names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    out << t.ids[i];
    for (std::size_t k = 0; k < t.class_names.size(); ++k) out << ',' << text::format_real(t.scores(i, k));
    out << '\n';
  }
}

inline ScoreTable read_scores_csv(const fs::path& path) {
  const auto content = detail::read_file(path);
  ScoreTable t;
  std::vector<double> values;
  std::size_t line_no = 0;
  auto bad = [&](const std::string& msg) {
    return Error(ErrorKind::malformed_manifest, path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (text::trim(line).empty()) continue;
    const auto f = text::split(line, ',');
    if (t.class_names.empty() && t.ids.empty() && values.empty()) {
      if (f.size() < 2 || f[0] != "id") throw bad("header must be 'id,<class>...'");
      for (std::size_t k = 1; k < f.size(); ++k) t.class_names.emplace_back(f[k]);
      continue;
    }
    if (f.size() != t.class_names.size() + 1) throw bad("wrong number of columns");
    t.ids.emplace_back(f[0]);
    for (std::size_t k = 1; k < f.size(); ++k) {
      const auto v = text::parse_real(f[k]);
      if (!v || !std::isfinite(*v)) throw bad("score is not a finite number");
      values.push_back(*v);
    }
  }
  if (t.class_names.empty()) throw Error(ErrorKind::malformed_manifest, path.string() + ": empty score table");
  t.scores = Matrix<double>(t.ids.size(), t.class_names.size(), std::move(values));
  return t;
}

// ---------------------------------------------------------------------------
// Training runs

/// The headline numbers of one run, as written to summary.json.
struct RunSummary {
  fs::path dir;
  std::string config_hash;
  std::size_t epochs = 0;
  std::size_t start_epoch = 0;        ///< aggregation window start
  double headline_map = 0.0;          ///< mean eval mAP over the last k epochs
  double final_map = 0.0;             ///< last-epoch mAP
  double weight_avg_map = 0.0;        ///< single model with averaged weights
  double ensemble_map = 0.0;          ///< mean probabilities of the window checkpoints
  double weight_avg_ensemble_map = 0.0;  ///< the window checkpoints plus the averaged model
  double deployed_map = 0.0;          ///< the aggregate selected by the config
  std::optional<EnhanceAudit> enhance_audit;
};

/// Deployed number: ensemble and weight-avg on -> committee of the window
/// checkpoints and the averaged model; one of them -> that aggregate;
/// neither -> the last-k headline.
inline double deployed_map(const RunSummary& s, bool weight_avg, bool ensemble) {
  if (weight_avg && ensemble) return s.weight_avg_ensemble_map;
  if (weight_avg) return s.weight_avg_map;
  if (ensemble) return s.ensemble_map;
  return s.headline_map;
}

inline nlohmann::json to_json(const RunSummary& s) {
  nlohmann::json j{{"config_hash", s.config_hash},
                   {"epochs", s.epochs},
                   {"start_epoch", s.start_epoch},
                   {"headline_map", s.headline_map},
                   {"final_map", s.final_map},
                   {"weight_avg_map", s.weight_avg_map},
                   {"ensemble_map", s.ensemble_map},
                   {"weight_avg_ensemble_map", s.weight_avg_ensemble_map},
                   {"deployed_map", s.deployed_map}};
  if (s.enhance_audit) {
    j["labels_added"] = s.enhance_audit->labels_added;
    j["percent_added"] = s.enhance_audit->percent_added;
  }
  return j;
}

inline RunSummary run_summary_from_json(const nlohmann::json& j, fs::path dir = {}) {
  RunSummary s;
  s.dir = std::move(dir);
  s.config_hash = j.at("config_hash").get<std::string>();
  s.epochs = j.at("epochs").get<std::size_t>();
  s.start_epoch = j.at("start_epoch").get<std::size_t>();
  s.headline_map = j.at("headline_map").get<double>();
  s.final_map = j.at("final_map").get<double>();
  s.weight_avg_map = j.at("weight_avg_map").get<double>();
  s.ensemble_map = j.at("ensemble_map").get<double>();
  s.weight_avg_ensemble_map = j.at("weight_avg_ensemble_map").get<double>();
  s.deployed_map = j.at("deployed_map").get<double>();
  return s;
}

inline nlohmann::json to_json(const EnhanceAudit& a, const std::vector<std::string>& names) {
  nlohmann::json impacted = nlohmann::json::array(), skipped = nlohmann::json::array();
  for (auto k : a.impacted_classes) impacted.push_back(names.at(k));
  for (auto k : a.skipped_undefined) skipped.push_back(names.at(k));
  return {{"call_site", a.call_site},
          {"mode", std::string(to_string(a.mode))},
          {"original_labels", a.original_labels},
          {"labels_added", a.labels_added},
          {"percent_added", a.percent_added},
          {"impacted_classes", impacted},
          {"num_impacted_classes", a.impacted_classes.size()},
          {"skipped_undefined", skipped}};
}

/// The parameters a finished run deploys as a teacher: the averaged model
/// when present, else the last checkpoint.
inline Checkpoint load_run_model(const fs::path& run_dir) {
  if (fs::is_regular_file(run_dir / "weight_avg.ckpt")) return load_checkpoint(run_dir / "weight_avg.ckpt");
  const auto summary = read_json(run_dir / "summary.json");
  const auto last = summary.at("epochs").get<std::size_t>();
  return load_checkpoint(run_dir / "checkpoints" / (epoch_tag(last) + ".ckpt"));
}

inline ExperimentConfig load_run_config(const fs::path& run_dir) {
  const auto path = run_dir / "config.yaml";
  if (!fs::is_regular_file(path)) throw Error(ErrorKind::io, "missing run config " + path.string());
  return load_experiment_config(path);
}

/// Teacher scores for the train corpus under config `c`.
inline Matrix<double> teacher_scores(const fs::path& teacher_run, const MultiLabelCorpus& corpus) {
  if (!fs::is_directory(teacher_run)) throw Error(ErrorKind::io, "teacher run " + teacher_run.string() + " not found");
  const auto teacher_cfg = load_run_config(teacher_run);
  const auto ckpt = load_run_model(teacher_run);
  auto mc = teacher_cfg.model;
  if (mc.input != corpus.shape() || mc.num_classes != corpus.num_classes())
    throw Error(ErrorKind::shape_mismatch, "teacher model does not match the corpus dimensions");
  return predict(Model(mc), ckpt.params, corpus);
}

struct RunOptions {
  LogFn log;
  /// Keeps per-epoch eval predictions in scores/ for later aggregation.
  bool write_predictions = true;
};

/// Full training pipeline for one config; returns the summary written to
/// `<output_dir>/summary.json`.
inline RunSummary run_train(const ExperimentConfig& config, const RunOptions& options = {}) {
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  const fs::path dir = config.output_dir;
  RunLock lock(dir);
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "eval");
  if (options.write_predictions) fs::create_directories(dir / "scores");

  const auto snapshot = to_yaml(config);
  const auto hash = config_hash(snapshot);
  detail::open_out(dir / "config.yaml") << snapshot;
  detail::open_out(dir / "config.hash") << hash << '\n';

  auto train_corpus = load_corpus(config.train_corpus);
  const auto eval_corpus = load_corpus(config.eval_corpus);
  const auto& names = train_corpus.classes().names;
  if (eval_corpus.classes().names != names)
    throw Error(ErrorKind::shape_mismatch, "train and eval corpora use different class lists");

  RunSummary summary;
  summary.dir = dir;
  summary.config_hash = hash;
  if (config.enhance) {
    const auto& e = *config.enhance;
    const auto onto = read_ontology(*config.ontology, names);
    const auto scores = teacher_scores(e.teacher_run, train_corpus);
    const auto labels = train_corpus.labels();
    const auto thresholds = make_thresholds(scores, labels, e.policy, e.fixed_threshold);
    auto fixed = enhance(labels, scores, onto, thresholds, e.mode, {e.strict, "train"});
    fs::create_directories(dir / "enhance");
    write_label_file(dir / "enhance" / "train_labels.txt", sample_ids(train_corpus), fixed.labels, names);
    write_json(dir / "enhance" / "audit.json", to_json(fixed.audit, names));
    write_audit_csv(detail::lvalue(detail::open_out(dir / "enhance" / "audit.csv")), fixed.audit, names);
    log("label enhancement added " + std::to_string(fixed.audit.labels_added) + " labels (" +
        text::format_real(fixed.audit.percent_added) + "%)");
    train_corpus = train_corpus.with_labels(fixed.labels);
    summary.enhance_audit = std::move(fixed.audit);
  }

  const Model model(config.model);
  std::optional<ParameterVector> init;
  if (config.init) {
    auto ext = load_external_init(*config.init, config.model, derive_seed(config.seed, "init"));
    log("initialized " + std::to_string(ext.loaded.size()) + " tensors from " + config.init->string() + ", " +
        std::to_string(ext.reinitialized.size()) + " fresh");
    init = std::move(ext.params);
  }

  auto result = train(model, train_corpus, config.augment, config.train, &eval_corpus, std::move(init),
                      [&](const EpochLog& e) {
                        log("epoch " + std::to_string(e.epoch) + " lr " + text::format_real(e.lr) + " loss " +
                            text::format_real(e.loss) + " mAP " + text::format_real(e.eval_map.value_or(NAN)));
                      });
  write_train_log(detail::lvalue(detail::open_out(dir / "train_log.csv")), result.log);
  const auto eval_ids = sample_ids(eval_corpus);
  for (std::size_t i = 0; i < result.checkpoints.size(); ++i) {
    const auto tag = epoch_tag(result.checkpoints[i].epoch);
    save_checkpoint(dir / "checkpoints" / (tag + ".ckpt"), result.checkpoints[i]);
    write_json(dir / "eval" / (tag + ".json"), to_json(result.eval_reports[i], names));
    write_class_csv(detail::lvalue(detail::open_out(dir / "eval" / (tag + ".csv"))), result.eval_reports[i], names);
    if (options.write_predictions)
      write_scores_csv(dir / "scores" / (tag + ".csv"), {eval_ids, names, result.eval_predictions[i]});
  }

  const std::size_t E = config.train.epochs;
  const std::size_t start =
      config.aggregate.start_epoch.value_or(config.train.schedule.quarter_lr_epoch(E));
  const auto labels = eval_corpus.labels();
  const auto avg = average_weights(result.checkpoints, start);
  save_checkpoint(dir / "weight_avg.ckpt", Checkpoint{E, avg});
  const auto avg_preds = predict(model, avg, eval_corpus);
  const auto avg_report = evaluate(avg_preds, labels);
  write_json(dir / "weight_avg.json", to_json(avg_report, names));

  Committee window;
  for (std::size_t i = 0; i < result.checkpoints.size(); ++i)
    if (result.checkpoints[i].epoch >= start)
      window.add(result.eval_predictions[i], epoch_tag(result.checkpoints[i].epoch));
  const auto ens_report = evaluate(ensemble_mean(window), labels);
  write_json(dir / "ensemble.json", to_json(ens_report, names));
  window.add(avg_preds, "weight_avg");
  const auto both_report = evaluate(ensemble_mean(window), labels);

  if (config.aggregate.sweep) write_sweep_csv(detail::lvalue(detail::open_out(dir / "sweep.csv")), sweep_start_epoch(model, result.checkpoints, eval_corpus));

  summary.epochs = E;
  summary.start_epoch = start;
  summary.headline_map = result.headline_map(config.train.report_last_k);
  summary.final_map = result.eval_reports.back().mAP;
  summary.weight_avg_map = avg_report.mAP;
  summary.ensemble_map = ens_report.mAP;
  summary.weight_avg_ensemble_map = both_report.mAP;
  summary.deployed_map = deployed_map(summary, config.aggregate.weight_avg, config.aggregate.ensemble);
  write_json(dir / "summary.json", to_json(summary));
  return summary;
}

// ---------------------------------------------------------------------------
// Re-evaluation of a finished run

struct EvalOutcome {
  EvalReport report;
  std::vector<std::string> class_names;
  std::vector<std::string> warnings;
};

/// Evaluates a checkpoint of a run ("weight_avg", "last" or an epoch
/// number) on the run's eval corpus, or on `eval_dir` when given. Warns when
/// the stored snapshot no longer matches its recorded hash.
inline EvalOutcome run_eval(const fs::path& run_dir, const std::string& which = "weight_avg",
                            const std::optional<fs::path>& eval_dir = std::nullopt) {
  EvalOutcome out;
  const auto snapshot = detail::read_file(run_dir / "config.yaml");
  std::string recorded = detail::read_file(run_dir / "config.hash");
  recorded = std::string(text::trim(recorded));
  if (config_hash(snapshot) != recorded)
    out.warnings.push_back("config.yaml of " + run_dir.string() +
                           " was modified after the run; results may not reproduce");
  const auto config = load_run_config(run_dir);
  Checkpoint ckpt;
  if (which == "weight_avg") {
    ckpt = load_checkpoint(run_dir / "weight_avg.ckpt");
  } else if (which == "last") {
    ckpt = load_checkpoint(run_dir / "checkpoints" / (epoch_tag(config.train.epochs) + ".ckpt"));
  } else {
    const auto e = text::parse_int<std::size_t>(which);
    if (!e) throw Error(ErrorKind::invalid_argument, "checkpoint must be weight_avg, last or an epoch number");
    ckpt = load_checkpoint(run_dir / "checkpoints" / (epoch_tag(*e) + ".ckpt"));
  }
  const auto eval = eval_dir ? read_corpus(*eval_dir) : load_corpus(config.eval_corpus);
  if (eval.shape() != config.model.input || eval.num_classes() != config.model.num_classes)
    throw Error(ErrorKind::shape_mismatch, "eval corpus does not match the run's model");
  out.report = evaluate(predict(Model(config.model), ckpt.params, eval), eval.labels());
  out.class_names = eval.classes().names;
  return out;
}

// ---------------------------------------------------------------------------
// Label enhancement

struct EnhanceJob {
  std::optional<fs::path> teacher_run;  ///< scores from the teacher's model...
  std::optional<fs::path> scores_csv;   ///< ...or from a precomputed table
  std::optional<fs::path> labels_path;  ///< labels for scores_csv rows
  fs::path ontology;
  std::vector<ThresholdPolicy> policies{ThresholdPolicy::mean};
  RepairMode mode = RepairMode::both;
  double fixed_threshold = 0.5;
  bool strict = true;
  fs::path output_dir;
};

struct EnhanceRow {
  ThresholdPolicy policy;
  EnhanceAudit train;
  std::optional<EnhanceAudit> eval;
};

/// Scores the teacher's train (and eval) splits, derives thresholds from the
/// train split per policy and writes `<policy>/{train,eval}_labels.txt`,
/// audits and `summary.csv`.
inline std::vector<EnhanceRow> run_enhance(const EnhanceJob& job) {
  struct Split {
    std::vector<std::string> ids;
    LabelMatrix labels;
    Matrix<double> scores;
  };
  std::vector<std::string> names;
  Split train_split;
  std::optional<Split> eval_split;
  if (job.teacher_run) {
    const auto cfg = load_run_config(*job.teacher_run);
    const auto train_c = load_corpus(cfg.train_corpus);
    const auto eval_c = load_corpus(cfg.eval_corpus);
    names = train_c.classes().names;
    train_split = {sample_ids(train_c), train_c.labels(), teacher_scores(*job.teacher_run, train_c)};
    eval_split = Split{sample_ids(eval_c), eval_c.labels(), teacher_scores(*job.teacher_run, eval_c)};
  } else {
    if (!job.scores_csv || !job.labels_path)
      throw Error(ErrorKind::config, "enhancement needs a teacher run or a score table with labels");
    auto table = read_scores_csv(*job.scores_csv);
    names = table.class_names;
    const auto rows = read_label_file(*job.labels_path, names);
    std::unordered_map<std::string, const LabelSet*> by_id;
    for (const auto& [id, y] : rows) by_id[id] = &y;
    for (const auto& id : table.ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end()) throw Error(ErrorKind::malformed_manifest, "no labels for scored sample " + id);
      train_split.labels.push_back(*it->second);
    }
    train_split.ids = std::move(table.ids);
    train_split.scores = std::move(table.scores);
  }
  const auto onto = read_ontology(job.ontology, names);

  fs::create_directories(job.output_dir);
  auto summary = detail::open_out(job.output_dir / "summary.csv");
  summary << "policy,split,mode,original_labels,labels_added,percent_added,impacted_classes\n";
  auto row_out = [&](ThresholdPolicy p, const EnhanceAudit& a) {
    summary << to_string(p) << ',' << a.call_site << ',' << to_string(a.mode) << ',' << a.original_labels << ','
            << a.labels_added << ',' << text::format_real(a.percent_added) << ',' << a.impacted_classes.size()
            << '\n';
  };
  std::vector<EnhanceRow> rows;
  for (const auto policy : job.policies) {
    const auto thresholds = make_thresholds(train_split.scores, train_split.labels, policy, job.fixed_threshold);
    const auto dir = job.output_dir / std::string(to_string(policy));
    fs::create_directories(dir);
    {
      auto t = detail::open_out(dir / "thresholds.csv");
      t << "class,threshold\n";
      for (std::size_t k = 0; k < names.size(); ++k)
        t << names[k] << ',' << (thresholds.t[k] ? text::format_real(*thresholds.t[k]) : std::string()) << '\n';
    }
    EnhanceRow row{policy, {}, std::nullopt};
    auto tr = enhance(train_split.labels, train_split.scores, onto, thresholds, job.mode, {job.strict, "train"});
    write_label_file(dir / "train_labels.txt", train_split.ids, tr.labels, names);
    write_json(dir / "audit_train.json", to_json(tr.audit, names));
    write_audit_csv(detail::lvalue(detail::open_out(dir / "audit_train.csv")), tr.audit, names);
    row_out(policy, tr.audit);
    row.train = std::move(tr.audit);
    if (eval_split) {
      auto ev = enhance_eval_set(eval_split->labels, eval_split->scores, onto, thresholds, job.mode,
                                 {job.strict, "eval"});
      write_label_file(dir / "eval_labels.txt", eval_split->ids, ev.labels, names);
      write_json(dir / "audit_eval.json", to_json(ev.audit, names));
      write_audit_csv(detail::lvalue(detail::open_out(dir / "audit_eval.csv")), ev.audit, names);
      row_out(policy, ev.audit);
      row.eval = std::move(ev.audit);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Committees of runs

/// One committee member: a run directory and which of its models to use
/// ("weight_avg", "last" or an epoch number).
struct CommitteeMember {
  fs::path run_dir;
  std::string which = "weight_avg";
};

/// Manifest lines: `<run_dir> [weight_avg|last|<epoch>]`; '#' starts a comment.
inline std::vector<CommitteeMember> read_committee_manifest(const fs::path& path) {
  const auto base = fs::absolute(path).parent_path();
  std::vector<CommitteeMember> out;
  const auto content = detail::read_file(path);
  std::size_t line_no = 0;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto f = text::split_ws(line);
    if (f.empty()) continue;
    if (f.size() > 2)
      throw Error(ErrorKind::malformed_manifest, path.string() + ":" + std::to_string(line_no) +
                                                     ": expected '<run_dir> [weight_avg|last|<epoch>]'");
    fs::path dir{std::string(f[0])};
    if (dir.is_relative()) dir = base / dir;
    out.push_back({dir, f.size() == 2 ? std::string(f[1]) : "weight_avg"});
  }
  if (out.empty()) throw Error(ErrorKind::malformed_manifest, path.string() + ": committee is empty");
  return out;
}

struct AggregateJob {
  std::vector<CommitteeMember> members;
  std::optional<fs::path> eval_dir;  ///< default: the first member's eval corpus
  fs::path output_dir;
  bool sweep = false;  ///< start-epoch sweep of every member's checkpoints
};

struct CommitteeReport {
  std::vector<double> member_map;
  double avg_map = 0.0;
  double best_map = 0.0;
  double ensemble_map = 0.0;                ///< mean of member probabilities
  double logit_ensemble_map = 0.0;          ///< mean of member logits
  std::optional<double> weight_avg_map;     ///< averaged member parameters, when manifests agree
  EvalReport ensemble;
};

inline CommitteeReport run_aggregate(const AggregateJob& job) {
  if (job.members.empty()) throw Error(ErrorKind::invalid_argument, "committee is empty");
  const auto first_cfg = load_run_config(job.members.front().run_dir);
  const auto eval = job.eval_dir ? read_corpus(*job.eval_dir) : load_corpus(first_cfg.eval_corpus);
  const auto labels = eval.labels();
  const auto& names = eval.classes().names;
  fs::create_directories(job.output_dir);

  CommitteeReport report;
  Committee probs, logits;
  std::vector<Checkpoint> params;
  std::optional<ModelConfig> shared_model = first_cfg.model;
  auto members_csv = detail::open_out(job.output_dir / "members.csv");
  members_csv << "member,run_dir,model,map\n";
  for (std::size_t m = 0; m < job.members.size(); ++m) {
    const auto& member = job.members[m];
    const auto cfg = load_run_config(member.run_dir);
    if (cfg.model.input != eval.shape() || cfg.model.num_classes != eval.num_classes())
      throw Error(ErrorKind::shape_mismatch, "member " + member.run_dir.string() + " does not match the eval corpus");
    Checkpoint ckpt;
    if (member.which == "weight_avg") {
      ckpt = load_checkpoint(member.run_dir / "weight_avg.ckpt");
    } else {
      const auto e = member.which == "last" ? std::optional(cfg.train.epochs)
                                            : text::parse_int<std::size_t>(member.which);
      if (!e) throw Error(ErrorKind::malformed_manifest, "bad member model '" + member.which + "'");
      ckpt = load_checkpoint(member.run_dir / "checkpoints" / (epoch_tag(*e) + ".ckpt"));
    }
    const Model model(cfg.model);
    auto z = predict(model, ckpt.params, eval, true);
    auto p = z;
    for (auto& v : p.values()) v = sigmoid(v);
    const auto r = evaluate(p, labels);
    report.member_map.push_back(r.mAP);
    write_json(job.output_dir / ("member_" + std::to_string(m) + ".json"), to_json(r, names));
    members_csv << m << ',' << member.run_dir.string() << ',' << member.which << ',' << text::format_real(r.mAP)
                << '\n';
    const auto tag = member.run_dir.filename().string() + ":" + member.which;
    probs.add(std::move(p), tag);
    logits.add(std::move(z), tag);
    if (shared_model && cfg.model != *shared_model) shared_model.reset();
    params.push_back(Checkpoint{0, std::move(ckpt.params)});

    if (job.sweep) {
      std::vector<Checkpoint> history;
      for (std::size_t e = 1; e <= cfg.train.epochs; ++e)
        history.push_back(load_checkpoint(member.run_dir / "checkpoints" / (epoch_tag(e) + ".ckpt")));
      write_sweep_csv(detail::lvalue(detail::open_out(job.output_dir / ("sweep_" + std::to_string(m) + ".csv"))),
                      sweep_start_epoch(model, history, eval));
    }
  }
  report.avg_map = std::accumulate(report.member_map.begin(), report.member_map.end(), 0.0) /
                   static_cast<double>(report.member_map.size());
  report.best_map = *std::max_element(report.member_map.begin(), report.member_map.end());
  report.ensemble = evaluate(ensemble_mean(probs), labels);
  report.ensemble_map = report.ensemble.mAP;
  report.logit_ensemble_map = evaluate(ensemble_logit_mean(logits), labels).mAP;
  if (shared_model)
    report.weight_avg_map = evaluate(predict(Model(*shared_model), average_weights(params, 0), eval), labels).mAP;

  write_json(job.output_dir / "ensemble.json", to_json(report.ensemble, names));
  auto cmp = detail::open_out(job.output_dir / "comparison.csv");
  cmp << "members,avg_map,best_map,ensemble_map,logit_ensemble_map,weight_avg_map\n";
  cmp << job.members.size() << ',' << text::format_real(report.avg_map) << ',' << text::format_real(report.best_map)
      << ',' << text::format_real(report.ensemble_map) << ',' << text::format_real(report.logit_ensemble_map) << ','
      << (report.weight_avg_map ? text::format_real(*report.weight_avg_map) : std::string()) << '\n';
  return report;
}

// ---------------------------------------------------------------------------
// Ablations

/// Techniques that an ablation can remove from the base recipe.
inline const std::vector<std::string>& ablation_toggles() {
  static const std::vector<std::string> t{"pretrain-init", "balanced", "masking", "mixup",
                                          "labelfix",      "ensemble", "weight-avg"};
  return t;
}

/// The base config with one technique removed. Throws a config error when
/// the technique is not part of the base recipe.
inline ExperimentConfig without_technique(ExperimentConfig c, std::string_view toggle) {
  auto off = [&](bool enabled) {
    if (!enabled)
      throw Error(ErrorKind::config, "toggle '" + std::string(toggle) + "' is not enabled in the base config");
  };
  if (toggle == "pretrain-init") {
    off(c.init.has_value());
    c.init.reset();
  } else if (toggle == "balanced") {
    off(c.augment.balanced);
    c.augment.balanced = false;
  } else if (toggle == "masking") {
    off(c.augment.freq_mask > 0 || c.augment.time_mask > 0);
    c.augment.freq_mask = c.augment.time_mask = 0;
  } else if (toggle == "mixup") {
    off(c.augment.mixup_rate > 0);
    c.augment.mixup_rate = 0;
  } else if (toggle == "labelfix") {
    off(c.enhance.has_value());
    c.enhance.reset();
  } else if (toggle == "ensemble") {
    off(c.aggregate.ensemble);
    c.aggregate.ensemble = false;
  } else if (toggle == "weight-avg") {
    off(c.aggregate.weight_avg);
    c.aggregate.weight_avg = false;
  } else {
    throw Error(ErrorKind::config, "unknown ablation toggle '" + std::string(toggle) + "'");
  }
  return c;
}

struct AblationRow {
  std::string variant;  ///< "full" or "no-<toggle>"
  std::vector<std::uint64_t> seeds;
  std::vector<double> maps;  ///< deployed mAP per seed
  double mean = 0.0;
  double sd = 0.0;  ///< sample standard deviation (0 for one seed)
};

inline void summarize(AblationRow& row) {
  const double n = static_cast<double>(row.maps.size());
  row.mean = std::accumulate(row.maps.begin(), row.maps.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : row.maps) ss += (v - row.mean) * (v - row.mean);
  row.sd = row.maps.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
}

/// Trains the full recipe and every toggle-removed variant for each seed
/// under `<output_dir>/<variant>/seed_<s>` and writes `ablation.csv` plus
/// per-run `runs.csv`. Variants that only change the reported aggregate
/// reuse the full-recipe runs.
inline std::vector<AblationRow> run_ablation(const ExperimentConfig& base, const std::vector<std::string>& toggles,
                                             const std::vector<std::uint64_t>& seeds, const fs::path& output_dir,
                                             const RunOptions& options = {}) {
  if (seeds.empty()) throw Error(ErrorKind::config, "ablation needs at least one seed");
  std::vector<std::pair<std::string, ExperimentConfig>> variants{{"full", base}};
  for (const auto& t : toggles) {
    if (std::find(ablation_toggles().begin(), ablation_toggles().end(), t) == ablation_toggles().end())
      throw Error(ErrorKind::config, "unknown ablation toggle '" + t + "'");
    for (const auto& [name, _] : variants)
      if (name == "no-" + t) throw Error(ErrorKind::config, "duplicate ablation toggle '" + t + "'");
    variants.emplace_back("no-" + t, without_technique(base, t));
  }
  auto seeded = [](const ExperimentConfig& c, std::uint64_t seed, const fs::path& dir) {
    auto out = with_master_seed(c, seed);
    out.output_dir = dir;
    return out;
  };


  fs::create_directories(output_dir);
  auto runs_csv = detail::open_out(output_dir / "runs.csv");
  runs_csv << "variant,seed,run_dir,map\n";
  std::map<std::uint64_t, RunSummary> full_runs;
  std::vector<AblationRow> rows;
  for (const auto& [name, cfg] : variants) {
    AblationRow row{name, seeds, {}, 0.0, 0.0};
    const bool post_hoc = name == "no-ensemble" || name == "no-weight-avg";
    for (const auto seed : seeds) {
      RunSummary s;
      if (post_hoc) {
        s = full_runs.at(seed);
      } else {
        const auto dir = output_dir / name / ("seed_" + std::to_string(seed));
        s = run_train(seeded(cfg, seed, dir), options);
        if (name == "full") full_runs[seed] = s;
      }
      const double map = deployed_map(s, cfg.aggregate.weight_avg, cfg.aggregate.ensemble);
      row.maps.push_back(map);
      runs_csv << name << ',' << seed << ',' << s.dir.string() << ',' << text::format_real(map) << '\n';
    }
    summarize(row);
    rows.push_back(std::move(row));
  }
  auto table = detail::open_out(output_dir / "ablation.csv");
  table << "variant,seeds,map_mean,map_sd\n";
  for (const auto& r : rows)
    table << r.variant << ',' << r.seeds.size() << ',' << text::format_real(r.mean) << ','
          << text::format_real(r.sd) << '\n';
  return rows;
}

}  // namespace psla
