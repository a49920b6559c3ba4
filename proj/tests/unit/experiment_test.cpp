// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "psla/experiment.hpp"
#include "support.hpp"

namespace psla {
namespace {

using testing::TempDir;
using testing::throws_kind;

std::string tiny_yaml(const std::string& kind = "attention", std::size_t epochs = 5) {
  return R"(seed: 7
corpus:
  train:
    synthetic: {num_classes: 3, num_samples: 200, imbalance_ratio: 4, frames: 8, bins: 4, signal_strength: 2}
  eval:
    synthetic: {num_classes: 3, num_samples: 100, imbalance_ratio: 1, frames: 8, bins: 4, signal_strength: 2}
model: {kind: )" + kind + R"(, stride1: 2, stride2: 2, hidden_dim: 6, embed_dim: 6, heads: 2}
augment: {freq_mask: 1, time_mask: 2}
train: {epochs: )" + std::to_string(epochs) + R"(, batch_size: 20, lr: 0.01, warmup_iters: 5, decay_start_epoch: 2, decay_period: 1}
)";
}

ExperimentConfig tiny_config(const fs::path& out, const std::string& kind = "attention", std::uint64_t seed = 7) {
  auto c = with_master_seed(parse_experiment_config(tiny_yaml(kind)), seed);
  c.output_dir = out;
  return c;
}

std::string config_error(const std::string& yaml) {
  try {
    parse_experiment_config(yaml);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    return e.what();
  }
  return "no error";
}

TEST(Config, DefaultsAndRegime) {
  const auto c = parse_experiment_config(tiny_yaml());
  EXPECT_EQ(c.model.num_classes, 3u);
  EXPECT_EQ(c.model.input, (FeatureShape{8, 4}));
  EXPECT_EQ(c.train.seed, 7u);
  EXPECT_EQ(c.train.schedule.decay_start_epoch, 2u);
  EXPECT_TRUE(c.augment.balanced);
  auto y = tiny_yaml();
  y.replace(y.find("decay_start_epoch: 2, "), 22, "regime: full, ");
  const auto full = parse_experiment_config(y);
  EXPECT_EQ(full.train.schedule.decay_start_epoch, 10u);
  EXPECT_EQ(full.regime, "full");
}

TEST(Config, DiagnosticsNameTheLine) {
  auto y = tiny_yaml();
  y.replace(y.find("augment:"), 8, "augmnt:");
  EXPECT_NE(config_error(y).find("<config>:8: unknown key 'augmnt'"), std::string::npos) << config_error(y);
  auto bad_lr = tiny_yaml();
  bad_lr.replace(bad_lr.find("lr: 0.01"), 8, "lr: fast");
  EXPECT_NE(config_error(bad_lr).find("<config>:9:"), std::string::npos) << config_error(bad_lr);
  EXPECT_NE(config_error("seed: [1\n").find("<config>:"), std::string::npos);
  EXPECT_NE(config_error("seed: 1\n").find("missing required section 'corpus'"), std::string::npos);
  auto regime = tiny_yaml();
  regime.replace(regime.find("decay_start_epoch: 2"), 20, "regime: fast");
  EXPECT_NE(config_error(regime).find("unknown schedule regime"), std::string::npos);
}

TEST(Config, EnhanceRequiresOntology) {
  const auto msg = config_error(tiny_yaml() + "enhance: {teacher_run: runs/t}\n");
  EXPECT_NE(msg.find("requires an 'ontology'"), std::string::npos) << msg;
  EXPECT_TRUE(throws_kind([] { load_experiment_config("/nonexistent/psla.yaml"); }, ErrorKind::config));
}

TEST(Config, SnapshotRoundTripsWithStableHash) {
  TempDir tmp;
  const auto c = tiny_config(tmp / "run");
  const auto snap = to_yaml(c);
  const auto again = to_yaml(parse_experiment_config(snap));
  EXPECT_EQ(snap, again);
  EXPECT_EQ(config_hash(snap), config_hash(again));
  EXPECT_EQ(config_hash(snap).size(), 16u);
  EXPECT_NE(config_hash(to_yaml(with_master_seed(c, 8))), config_hash(snap));
}

TEST(Config, MasterSeedMovesUnpinnedStreamsOnly) {
  auto y = tiny_yaml();
  y.replace(y.find("signal_strength: 2}"), 19, "signal_strength: 2, seed: 11, pattern_seed: 12}");
  const auto c = with_master_seed(parse_experiment_config(y), 99);
  EXPECT_EQ(c.train_corpus.synth.seed, 11u);
  EXPECT_EQ(c.train_corpus.synth.pattern_seed, 12u);
  EXPECT_EQ(c.eval_corpus.synth.seed, derive_seed(99, "synth-eval"));
  EXPECT_EQ(c.train.seed, 99u);
}

TEST(RunTrain, WritesTheRunDirectoryDeterministically) {
  TempDir tmp;
  const auto a = run_train(tiny_config(tmp / "a"));
  const auto b = run_train(tiny_config(tmp / "b"));
  for (const char* f : {"config.yaml", "config.hash", "train_log.csv", "summary.json", "weight_avg.ckpt",
                        "weight_avg.json", "ensemble.json", "checkpoints/epoch_005.ckpt", "eval/epoch_001.json",
                        "eval/epoch_001.csv", "scores/epoch_003.csv"})
    EXPECT_TRUE(fs::is_regular_file(tmp / "a" / f)) << f;
  EXPECT_FALSE(fs::exists(tmp / "a" / ".lock"));
  EXPECT_EQ(detail::read_file(tmp / "a" / "weight_avg.ckpt"), detail::read_file(tmp / "b" / "weight_avg.ckpt"));
  EXPECT_EQ(detail::read_file(tmp / "a" / "train_log.csv"), detail::read_file(tmp / "b" / "train_log.csv"));
  EXPECT_EQ(a.headline_map, b.headline_map);
  EXPECT_EQ(a.epochs, 5u);
  // The window starts at the first quarter-rate epoch: decay at 2, period 1.
  EXPECT_EQ(a.start_epoch, 4u);
  EXPECT_EQ(a.deployed_map, a.weight_avg_ensemble_map);
  const auto back = run_summary_from_json(read_json(tmp / "a" / "summary.json"));
  EXPECT_EQ(back.weight_avg_map, a.weight_avg_map);
  EXPECT_EQ(back.config_hash, a.config_hash);
}

TEST(RunTrain, LockedDirectoryIsAnIoError) {
  TempDir tmp;
  const RunLock held(tmp / "run");
  EXPECT_TRUE(throws_kind([&] { run_train(tiny_config(tmp / "run")); }, ErrorKind::io));
  EXPECT_TRUE(throws_kind([&] { RunLock again(tmp / "run"); }, ErrorKind::io));
}

TEST(RunEval, MatchesTheRunAndWarnsOnEditedSnapshot) {
  TempDir tmp;
  const auto s = run_train(tiny_config(tmp / "run"));
  const auto ok = run_eval(tmp / "run");
  EXPECT_TRUE(ok.warnings.empty());
  EXPECT_EQ(ok.report.mAP, s.weight_avg_map);
  EXPECT_EQ(run_eval(tmp / "run", "last").report.mAP, s.final_map);
  EXPECT_TRUE(throws_kind([&] { run_eval(tmp / "run", "best"); }, ErrorKind::invalid_argument));
  std::ofstream(tmp / "run" / "config.yaml", std::ios::app) << "# edited\n";
  const auto edited = run_eval(tmp / "run");
  ASSERT_EQ(edited.warnings.size(), 1u);
  EXPECT_NE(edited.warnings[0].find("modified"), std::string::npos);
  EXPECT_EQ(edited.report.mAP, s.weight_avg_map);
}

TEST(RunEnhance, RecoversEveryPlantedDeletion) {
  TempDir tmp;
  const auto b = make_planted_error_benchmark(3);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < b.truth.size(); ++i) ids.push_back("clip" + std::to_string(i));
  write_scores_csv(tmp / "scores.csv", {ids, b.class_names, b.teacher});
  write_label_file(tmp / "labels.txt", ids, b.corrupted, b.class_names);
  write_ontology(b.ontology, tmp / "onto.txt", b.class_names);
  EnhanceJob job;
  job.scores_csv = tmp / "scores.csv";
  job.labels_path = tmp / "labels.txt";
  job.ontology = tmp / "onto.txt";
  job.policies = {ThresholdPolicy::fixed};
  job.output_dir = tmp / "out";
  const auto rows = run_enhance(job);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].train.labels_added, b.deleted_count);
  EXPECT_FALSE(rows[0].eval);
  const auto fixed = read_label_file(tmp / "out" / "fixed" / "train_labels.txt", b.class_names);
  for (std::size_t i = 0; i < ids.size(); ++i) EXPECT_EQ(fixed[i].second, b.truth[i]) << i;
  EXPECT_TRUE(fs::is_regular_file(tmp / "out" / "summary.csv"));
  job.labels_path.reset();
  EXPECT_TRUE(throws_kind([&] { run_enhance(job); }, ErrorKind::config));
}

TEST(RunAggregate, SingleMemberIsThatMember) {
  TempDir tmp;
  const auto s = run_train(tiny_config(tmp / "run"));
  const auto r = run_aggregate({{{tmp / "run", "weight_avg"}}, std::nullopt, tmp / "agg"});
  ASSERT_EQ(r.member_map.size(), 1u);
  EXPECT_DOUBLE_EQ(r.member_map[0], s.weight_avg_map);
  EXPECT_DOUBLE_EQ(r.ensemble_map, s.weight_avg_map);
  EXPECT_DOUBLE_EQ(r.logit_ensemble_map, s.weight_avg_map);
  ASSERT_TRUE(r.weight_avg_map);
  EXPECT_DOUBLE_EQ(*r.weight_avg_map, s.weight_avg_map);
  EXPECT_TRUE(fs::is_regular_file(tmp / "agg" / "comparison.csv"));
}

TEST(RunAggregate, LinearWeightAverageMatchesLogitEnsemble) {
  TempDir tmp;
  run_train(tiny_config(tmp / "a", "linear", 1));
  auto other = tiny_config(tmp / "b", "linear", 2);
  other.eval_corpus = tiny_config(tmp / "a", "linear", 1).eval_corpus;
  run_train(other);
  std::ofstream(tmp / "committee.txt") << "# two linear members\na last\nb 3\n";
  const auto members = read_committee_manifest(tmp / "committee.txt");
  ASSERT_EQ(members.size(), 2u);
  EXPECT_EQ(members[1].which, "3");
  const auto r = run_aggregate({members, std::nullopt, tmp / "agg"});
  ASSERT_TRUE(r.weight_avg_map);
  EXPECT_NEAR(*r.weight_avg_map, r.logit_ensemble_map, 1e-6);
  EXPECT_EQ(r.best_map, std::max(r.member_map[0], r.member_map[1]));
}

TEST(RunAggregate, BadManifest) {
  TempDir tmp;
  std::ofstream(tmp / "empty.txt") << "# nothing\n";
  EXPECT_TRUE(throws_kind([&] { read_committee_manifest(tmp / "empty.txt"); }, ErrorKind::malformed_manifest));
  std::ofstream(tmp / "wide.txt") << "a last extra\n";
  EXPECT_TRUE(throws_kind([&] { read_committee_manifest(tmp / "wide.txt"); }, ErrorKind::malformed_manifest));
}

TEST(Ablation, RowsAndSummaryStatistics) {
  TempDir tmp;
  const auto base = tiny_config(tmp / "unused");
  const std::vector<std::uint64_t> seeds{1, 2};
  const auto rows = run_ablation(base, {"mixup", "ensemble"}, seeds, tmp / "abl");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].variant, "full");
  EXPECT_EQ(rows[1].variant, "no-mixup");
  EXPECT_EQ(rows[2].variant, "no-ensemble");
  for (const auto& r : rows) {
    ASSERT_EQ(r.maps.size(), 2u);
    EXPECT_NEAR(r.mean, (r.maps[0] + r.maps[1]) / 2, 1e-15);
    EXPECT_NEAR(r.sd, std::abs(r.maps[0] - r.maps[1]) / std::sqrt(2.0), 1e-15);
  }
  // Removing the ensemble reuses the full runs and reports their averaged model.
  for (std::size_t i = 0; i < 2; ++i) {
    const auto s = run_summary_from_json(read_json(tmp / "abl" / "full" / ("seed_" + std::to_string(seeds[i])) /
                                                   "summary.json"));
    EXPECT_EQ(rows[0].maps[i], s.weight_avg_ensemble_map);
    EXPECT_EQ(rows[2].maps[i], s.weight_avg_map);
  }
  EXPECT_FALSE(fs::exists(tmp / "abl" / "no-ensemble"));
  std::istringstream table(detail::read_file(tmp / "abl" / "ablation.csv"));
  std::string line;
  std::getline(table, line);
  EXPECT_EQ(line, "variant,seeds,map_mean,map_sd");
  std::size_t n = 0;
  while (std::getline(table, line)) ++n;
  EXPECT_EQ(n, 3u);
}

TEST(Ablation, NoTogglesGivesTheFullRowOnly) {
  TempDir tmp;
  const auto rows = run_ablation(tiny_config(tmp / "unused"), {}, {4}, tmp / "abl");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].variant, "full");
  EXPECT_EQ(rows[0].sd, 0.0);
  EXPECT_EQ(rows[0].mean, rows[0].maps[0]);
}

TEST(Ablation, ConfigErrors) {
  TempDir tmp;
  const auto base = tiny_config(tmp / "unused");
  EXPECT_TRUE(throws_kind([&] { run_ablation(base, {"dropout"}, {1}, tmp / "x"); }, ErrorKind::config));
  EXPECT_TRUE(throws_kind([&] { run_ablation(base, {"labelfix"}, {1}, tmp / "x"); }, ErrorKind::config));
  EXPECT_TRUE(throws_kind([&] { run_ablation(base, {"mixup", "mixup"}, {1}, tmp / "x"); }, ErrorKind::config));
  EXPECT_TRUE(throws_kind([&] { run_ablation(base, {}, {}, tmp / "x"); }, ErrorKind::config));
}

}  // namespace
}  // namespace psla
