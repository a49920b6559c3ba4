// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

// psla: command-line front end for the experiment pipelines.
//
// Exit codes: 0 success, 1 other failure, 2 configuration error,
// 3 numerical failure.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "psla/psla.hpp"

namespace {

using namespace psla;

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

LogFn stderr_log(bool quiet) {
  if (quiet) return {};
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  for (auto part : text::split(s, ','))
    if (const auto t = text::trim(part); !t.empty()) out.emplace_back(t);
  return out;
}

/// Re-raises bad option values as configuration errors.
template <class F>
auto as_config(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(ErrorKind::config, e.what());
  }
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::numerical: return 3;
    default: return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PSLA audio-tagging recipe toolkit"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic long-tailed corpus (or the planted-error benchmark)");
  SynthSpec spec;
  std::string synth_out;
  bool planted = false;
  std::size_t planted_samples = 200;
  double planted_noise = 0.05;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--classes", spec.num_classes, "Number of classes")->capture_default_str();
  synth->add_option("--samples", spec.num_samples, "Number of samples")->capture_default_str();
  synth->add_option("--ratio", spec.imbalance_ratio, "Head/tail count ratio")->capture_default_str();
  synth->add_option("--cooccurrence", spec.cooccurrence, "Head-label co-occurrence rate")->capture_default_str();
  synth->add_option("--frames", spec.shape.frames, "Frames per clip")->capture_default_str();
  synth->add_option("--bins", spec.shape.bins, "Frequency bins")->capture_default_str();
  synth->add_option("--signal", spec.planted_signal_strength, "Planted pattern strength")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Sample seed")->capture_default_str();
  synth->add_option("--pattern-seed", spec.pattern_seed, "Class-pattern seed")->capture_default_str();
  synth->add_flag("--planted", planted, "Write the planted-error label benchmark instead");
  synth->add_option("--planted-samples", planted_samples, "Benchmark size")->capture_default_str();
  synth->add_option("--planted-noise", planted_noise, "Teacher noise amplitude")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "Train one run from a YAML config");
  std::string train_config, train_out;
  std::optional<std::uint64_t> train_seed;
  train_cmd->add_option("config", train_config, "Experiment config")->required();
  train_cmd->add_option("--out", train_out, "Run directory (overrides output_dir)");
  train_cmd->add_option("--seed", train_seed, "Master seed override (unpinned synthetic seeds follow it)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Re-evaluate a finished run");
  std::string eval_run, eval_which = "weight_avg", eval_corpus, eval_csv;
  eval_cmd->add_option("run", eval_run, "Run directory")->required();
  eval_cmd->add_option("--checkpoint", eval_which, "weight_avg, last or an epoch number")->capture_default_str();
  eval_cmd->add_option("--corpus", eval_corpus, "Evaluate on this corpus directory instead");
  eval_cmd->add_option("--class-csv", eval_csv, "Also write class-wise AP/AUC here");

  // enhance
  auto* enh = app.add_subcommand("enhance", "Ontology-constrained label enhancement");
  EnhanceJob job;
  std::string policies = "mean", mode = "both", teacher, scores, labels;
  bool permissive = false;
  enh->add_option("--teacher", teacher, "Teacher run directory");
  enh->add_option("--scores", scores, "Score table CSV (id,<class>...) instead of a teacher run");
  enh->add_option("--labels", labels, "Label file for the score table rows");
  enh->add_option("--ontology", job.ontology, "Ontology edge list")->required();
  enh->add_option("--policies", policies, "Comma list of mean,p25,p10,p5,fixed")->capture_default_str();
  enh->add_option("--mode", mode, "type1, type2 or both")->capture_default_str();
  enh->add_option("--fixed-threshold", job.fixed_threshold, "Threshold for the fixed policy")->capture_default_str();
  enh->add_flag("--permissive", permissive, "Skip classes without a threshold instead of failing");
  enh->add_option("--out", job.output_dir, "Output directory")->required();

  // aggregate
  auto* agg = app.add_subcommand("aggregate", "Evaluate a committee of runs");
  std::string committee, agg_corpus, agg_out;
  bool agg_sweep = false;
  agg->add_option("committee", committee, "Committee manifest")->required();
  agg->add_option("--corpus", agg_corpus, "Eval corpus directory (default: first member's)");
  agg->add_option("--out", agg_out, "Output directory")->required();
  agg->add_flag("--sweep", agg_sweep, "Write the start-epoch sweep of every member");

  // ablate
  auto* abl = app.add_subcommand("ablate", "Leave-one-technique-out ablation");
  std::string abl_config, abl_toggles, abl_seeds = "0", abl_out;
  abl->add_option("config", abl_config, "Full-recipe config")->required();
  abl->add_option("--toggles", abl_toggles, "Comma list of techniques to remove");
  abl->add_option("--seeds", abl_seeds, "Comma list of master seeds")->capture_default_str();
  abl->add_option("--out", abl_out, "Output directory")->required();

  // coverage
  auto* cov = app.add_subcommand("coverage", "Fraction of samples never drawn, per epoch");
  std::string cov_config, cov_corpus, cov_out;
  std::size_t cov_epochs = 5;
  std::optional<double> cov_rate;
  std::uint64_t cov_seed = 0;
  cov->add_option("--config", cov_config, "Take corpus and augmentation from this config");
  cov->add_option("--corpus", cov_corpus, "Corpus directory");
  cov->add_option("--epochs", cov_epochs, "Epochs to simulate")->capture_default_str();
  cov->add_option("--mixup-rate", cov_rate, "Override the mixup rate");
  cov->add_option("--seed", cov_seed, "Sampler seed")->capture_default_str();
  cov->add_option("--out", cov_out, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  const auto log = stderr_log(quiet);

  try {
    if (*synth) {
      if (planted) {
        const auto b = make_planted_error_benchmark(spec.seed, planted_samples, planted_noise);
        std::filesystem::create_directories(synth_out);
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < b.truth.size(); ++i) ids.push_back("p" + std::to_string(i));
        write_label_file(std::filesystem::path(synth_out) / "labels.txt", ids, b.corrupted, b.class_names);
        write_label_file(std::filesystem::path(synth_out) / "truth.txt", ids, b.truth, b.class_names);
        write_ontology(b.ontology, std::filesystem::path(synth_out) / "ontology.txt", b.class_names);
        write_scores_csv(std::filesystem::path(synth_out) / "teacher_scores.csv", {ids, b.class_names, b.teacher});
        print_json({{"samples", ids.size()}, {"deleted_labels", b.deleted_count}});
      } else {
        const auto corpus = generate_synthetic(spec);
        write_corpus(corpus, synth_out);
        print_json({{"samples", corpus.size()},
                    {"classes", corpus.num_classes()},
                    {"class_counts", corpus.classes().counts}});
      }
    } else if (*train_cmd) {
      auto cfg = load_experiment_config(train_config);
      if (train_seed) cfg = with_master_seed(std::move(cfg), *train_seed);
      if (!train_out.empty()) cfg.output_dir = train_out;
      print_json(to_json(run_train(cfg, {log, true})));
    } else if (*eval_cmd) {
      const auto out = run_eval(eval_run, eval_which,
                                eval_corpus.empty() ? std::nullopt : std::optional<std::filesystem::path>(eval_corpus));
      for (const auto& w : out.warnings) std::cerr << "warning: " << w << '\n';
      if (!eval_csv.empty()) write_class_csv(detail::lvalue(detail::open_out(eval_csv)), out.report, out.class_names);
      print_json(to_json(out.report, out.class_names));
    } else if (*enh) {
      if (!teacher.empty()) job.teacher_run = teacher;
      if (!scores.empty()) job.scores_csv = scores;
      if (!labels.empty()) job.labels_path = labels;
      if (job.teacher_run.has_value() == job.scores_csv.has_value())
        throw Error(ErrorKind::config, "pass exactly one of --teacher or --scores");
      job.policies.clear();
      for (const auto& p : split_list(policies))
        job.policies.push_back(as_config([&] { return parse_threshold_policy(p); }));
      job.mode = as_config([&] { return parse_repair_mode(mode); });
      job.strict = !permissive;
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& r : run_enhance(job)) {
        rows.push_back({{"policy", std::string(to_string(r.policy))},
                        {"labels_added", r.train.labels_added},
                        {"percent_added", r.train.percent_added},
                        {"impacted_classes", r.train.impacted_classes.size()}});
      }
      print_json(rows);
    } else if (*agg) {
      AggregateJob aj{read_committee_manifest(committee),
                      agg_corpus.empty() ? std::nullopt : std::optional<std::filesystem::path>(agg_corpus), agg_out,
                      agg_sweep};
      const auto r = run_aggregate(aj);
      print_json({{"members", r.member_map.size()},
                  {"avg_map", r.avg_map},
                  {"best_map", r.best_map},
                  {"ensemble_map", r.ensemble_map},
                  {"logit_ensemble_map", r.logit_ensemble_map},
                  {"weight_avg_map", r.weight_avg_map ? nlohmann::json(*r.weight_avg_map) : nlohmann::json()}});
    } else if (*abl) {
      const auto cfg = load_experiment_config(abl_config);
      std::vector<std::uint64_t> seeds;
      for (const auto& s : split_list(abl_seeds)) {
        const auto v = text::parse_int<std::uint64_t>(s);
        if (!v) throw Error(ErrorKind::config, "bad seed '" + s + "'");
        seeds.push_back(*v);
      }
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& r : run_ablation(cfg, split_list(abl_toggles), seeds, abl_out, {log, false}))
        rows.push_back({{"variant", r.variant}, {"map_mean", r.mean}, {"map_sd", r.sd}});
      print_json(rows);
    } else if (*cov) {
      if (cov_config.empty() == cov_corpus.empty()) throw Error(ErrorKind::config, "pass exactly one of --config or --corpus");
      MultiLabelCorpus corpus;
      AugmentConfig aug;
      if (!cov_config.empty()) {
        const auto cfg = load_experiment_config(cov_config);
        corpus = load_corpus(cfg.train_corpus);
        aug = cfg.augment;
      } else {
        corpus = read_corpus(cov_corpus);
        aug.freq_mask = aug.time_mask = 0;
      }
      if (cov_rate) aug.mixup_rate = *cov_rate;
      as_config([&] { validate(aug, corpus.shape()); });
      const auto trace =
          simulate_coverage(make_weights(corpus), corpus.labels(), aug, corpus.shape(), cov_epochs, cov_seed);
      if (cov_out.empty()) {
        write_coverage_csv(std::cout, trace);
      } else {
        write_coverage_csv(detail::lvalue(detail::open_out(cov_out)), trace);
      }
    }
  } catch (const Error& e) {
    std::cerr << "psla: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "psla: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
