// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "psla/aggregate.hpp"
#include "psla/train.hpp"
#include "support.hpp"

namespace psla {
namespace {

using testing::throws_kind;

ParameterVector vec(std::vector<double> v) {
  const auto n = v.size();
  return ParameterVector{std::move(v), {{"w", {n}}}};
}

std::vector<Checkpoint> random_checkpoints(std::mt19937_64& rng, std::size_t count, std::size_t n) {
  std::normal_distribution<double> g(0, 1);
  std::vector<Checkpoint> out;
  for (std::size_t e = 1; e <= count; ++e) {
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    out.push_back({e, vec(std::move(v))});
  }
  return out;
}

TEST(AverageWeights, SingleCheckpointWindow) {
  std::mt19937_64 rng(1);
  const auto ck = random_checkpoints(rng, 4, 10);
  EXPECT_EQ(average_weights(ck, 4), ck[3].params);
}

TEST(AverageWeights, OppositeVectorsCancel) {
  const std::vector<Checkpoint> ck{{1, vec({1.5, -2, 3})}, {2, vec({-1.5, 2, -3})}};
  EXPECT_EQ(average_weights(ck, 1).values, (std::vector<double>{0, 0, 0}));
}

TEST(AverageWeights, ScalarOracle) {
  std::mt19937_64 rng(2);
  const auto ck = random_checkpoints(rng, 5, 50);
  const auto avg = average_weights(ck, 1);
  for (std::size_t i = 0; i < 50; ++i) {
    double s = 0;
    for (const auto& c : ck) s += c.params.values[i];
    EXPECT_NEAR(avg.values[i], s / 5, 1e-15);
  }
  // Window [3, 5] only.
  const auto tail = average_weights(ck, 3);
  for (std::size_t i = 0; i < 50; ++i)
    EXPECT_NEAR(tail.values[i], (ck[2].params.values[i] + ck[3].params.values[i] + ck[4].params.values[i]) / 3,
                1e-15);
}

TEST(AverageWeights, PermutationInvariantAndIdempotent) {
  std::mt19937_64 rng(3);
  auto ck = random_checkpoints(rng, 6, 20);
  const auto a = average_weights(ck, 1);
  std::shuffle(ck.begin(), ck.end(), rng);
  EXPECT_EQ(average_weights(ck, 1), a);
  const std::vector<Checkpoint> same(4, Checkpoint{1, ck[0].params});
  EXPECT_EQ(average_weights(same, 1), ck[0].params);
}

TEST(AverageWeights, Errors) {
  const std::vector<Checkpoint> ck{{1, vec({1, 2})}, {2, vec({1, 2, 3})}};
  EXPECT_TRUE(throws_kind([&] { average_weights(ck, 1); }, ErrorKind::manifest_mismatch));
  EXPECT_TRUE(throws_kind([&] { average_weights(ck, 3); }, ErrorKind::empty_window));
}

TEST(EnsembleMean, IdenticalMembersAndMidpoint) {
  Committee same;
  const Matrix<double> m(2, 2, {0.1, 0.7, 0.3, 0.9});
  for (int i = 0; i < 3; ++i) same.add(m, "m" + std::to_string(i));
  EXPECT_EQ(ensemble_mean(same), m);
  Committee pair;
  pair.add(Matrix<double>(1, 1, 0.2), "a");
  pair.add(Matrix<double>(1, 1, 0.8), "b");
  EXPECT_DOUBLE_EQ(ensemble_mean(pair)(0, 0), 0.5);
}

TEST(EnsembleMean, ScalarOracleAndBounds) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  Committee c;
  for (int i = 0; i < 7; ++i) {
    Matrix<double> m(5, 3);
    for (auto& v : m.values()) v = u(rng);
    c.add(std::move(m), std::to_string(i));
  }
  const auto e = ensemble_mean(c);
  for (std::size_t n = 0; n < 15; ++n) {
    double s = 0, lo = 1, hi = 0;
    for (const auto& m : c.members) {
      s += m.values()[n];
      lo = std::min(lo, m.values()[n]);
      hi = std::max(hi, m.values()[n]);
    }
    EXPECT_NEAR(e.values()[n], s / 7, 1e-15);
    EXPECT_GE(e.values()[n], lo);
    EXPECT_LE(e.values()[n], hi);
  }
}

TEST(EnsembleMean, Errors) {
  EXPECT_TRUE(throws_kind([] { ensemble_mean(Committee{}); }, ErrorKind::invalid_argument));
  Committee c;
  c.add(Matrix<double>(2, 2), "a");
  c.add(Matrix<double>(2, 3), "b");
  EXPECT_TRUE(throws_kind([&] { ensemble_mean(c); }, ErrorKind::shape_mismatch));
}

struct TrainedRun {
  MultiLabelCorpus eval;
  Model model;
  TrainResult result;
};

TrainedRun train_small(ModelKind kind, std::size_t epochs, std::uint64_t seed) {
  SynthSpec spec{.num_classes = 5, .num_samples = 1000, .imbalance_ratio = 10, .cooccurrence = 0.2,
                 .seed = derive_seed(seed, "train"), .shape = {16, 8}, .planted_signal_strength = 2.0};
  const auto train_set = generate_synthetic(spec);
  spec.num_samples = 300;
  spec.imbalance_ratio = 1;
  spec.seed = derive_seed(seed, "eval");
  auto eval = generate_synthetic(spec);
  ModelConfig mc;
  mc.kind = kind;
  mc.input = spec.shape;
  mc.num_classes = 5;
  mc.stride1 = 4;
  mc.stride2 = 2;
  mc.hidden_dim = 16;
  mc.embed_dim = 16;
  mc.num_heads = 2;
  Model model(mc);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = 50;
  // Constant rate after warm-up: late checkpoints keep fluctuating, which is
  // the regime where long averaging windows pay off.
  tc.schedule = {.base_lr = 2e-2, .warmup_iters = 10, .decay_start_epoch = epochs};
  tc.seed = seed;
  const AugmentConfig aug{.freq_mask = 1, .time_mask = 2};
  auto result = train(model, train_set, aug, tc, &eval);
  return {std::move(eval), std::move(model), std::move(result)};
}

TEST(Sweep, SingleEpochIsTheModel) {
  const auto run = train_small(ModelKind::attention, 1, 5);
  const auto s = sweep_start_epoch(run.model, run.result.checkpoints, run.eval);
  ASSERT_EQ(s.start_epoch, (std::vector<std::size_t>{1}));
  EXPECT_EQ(s.weight_avg_map[0], run.result.eval_reports[0].mAP);
  EXPECT_EQ(s.prediction_avg_map[0], run.result.eval_reports[0].mAP);
}

TEST(Sweep, LinearWeightAveragingEqualsLogitAveraging) {
  const auto run = train_small(ModelKind::linear, 8, 6);
  const auto& ck = run.result.checkpoints;
  for (std::size_t start = 1; start <= ck.size(); ++start) {
    const auto wa = predict(run.model, average_weights(ck, start), run.eval, true);
    Committee lc;
    for (std::size_t j = start - 1; j < ck.size(); ++j) lc.add(predict(run.model, ck[j].params, run.eval, true), "");
    const auto mean_logits = ensemble_mean(lc);
    for (std::size_t n = 0; n < wa.values().size(); ++n)
      ASSERT_NEAR(wa.values()[n], mean_logits.values()[n], 1e-10) << start;
  }
  const auto s = sweep_start_epoch(run.model, ck, run.eval);
  for (std::size_t i = 0; i < s.start_epoch.size(); ++i) EXPECT_NEAR(s.weight_avg_map[i], s.logit_avg_map[i], 1e-10);
}

TEST(Sweep, EarlyStartHelpsPredictionAveraging) {
  double first = 0, last = 0;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto run = train_small(ModelKind::attention, 30, 100 + seed);
    const auto curve = sweep_prediction_average(run.result.eval_predictions, run.eval.labels());
    ASSERT_EQ(curve.size(), 30u);
    EXPECT_DOUBLE_EQ(curve.back(), run.result.eval_reports.back().mAP);
    wins += curve.front() >= curve.back();
    first += curve.front() / 5;
    last += curve.back() / 5;
  }
  EXPECT_GE(first, last);
  EXPECT_GE(wins, 3);
}

TEST(Sweep, CsvHeader) {
  StartEpochSweep s{{1, 2}, {0.5, 0.6}, {0.4, 0.7}, {0.45, 0.65}};
  std::ostringstream os;
  write_sweep_csv(os, s);
  EXPECT_EQ(os.str(), "start_epoch,weight_avg_map,prediction_avg_map,logit_avg_map\n1,0.5,0.4,0.45\n2,0.6,0.7,0.65\n");
}

}  // namespace
}  // namespace psla
