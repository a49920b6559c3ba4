// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "psla/metrics.hpp"
#include "support.hpp"

namespace psla {
namespace {

using testing::throws_kind;

// Independent O(N^2) AP: for each positive, count items ranked at or above
// it under "higher score first, earlier index wins ties".
double ap_oracle(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double sum = 0.0;
  int positives = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    ++positives;
    int rank = 0, hits = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const bool above = s[j] > s[i] || (s[j] == s[i] && j <= i);
      if (above) {
        ++rank;
        hits += y[j];
      }
    }
    sum += static_cast<double>(hits) / rank;
  }
  return sum / positives;
}

// Exhaustive pair counting; ties count one half (kept doubled to stay exact).
double auc_oracle(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  long wins_x2 = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      ++pairs;
      wins_x2 += s[i] > s[j] ? 2 : s[i] == s[j] ? 1 : 0;
    }
  }
  return static_cast<double>(wins_x2) / static_cast<double>(2 * pairs);
}

struct RandomCase {
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
};

RandomCase random_case(std::mt19937_64& rng, std::size_t n, bool coarse) {
  RandomCase c;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> level(0, 4);
  do {
    c.scores.clear();
    c.labels.clear();
    for (std::size_t i = 0; i < n; ++i) {
      c.scores.push_back(coarse ? level(rng) / 4.0 : u(rng));
      c.labels.push_back(u(rng) < 0.3 ? 1 : 0);
    }
  } while (std::count(c.labels.begin(), c.labels.end(), 1) == 0 ||
           std::count(c.labels.begin(), c.labels.end(), 0) == 0);
  return c;
}

TEST(AveragePrecision, PerfectRankingIsOne) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<std::uint8_t> y{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(*average_precision(s, y), 1.0);
}

TEST(AveragePrecision, SinglePositiveAtRankTwo) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<std::uint8_t> y{0, 1, 0, 0};
  EXPECT_DOUBLE_EQ(*average_precision(s, y), 0.5);
}

TEST(AveragePrecision, UndefinedWithoutPositives) {
  const std::vector<double> s{0.9, 0.1};
  const std::vector<std::uint8_t> y{0, 0};
  EXPECT_FALSE(average_precision(s, y).has_value());
}

TEST(AveragePrecision, TiesKeepInputOrder) {
  // Stable descending sort: the positive listed first ranks first.
  const std::vector<double> s{0.5, 0.5};
  EXPECT_DOUBLE_EQ(*average_precision(s, std::vector<std::uint8_t>{1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(*average_precision(s, std::vector<std::uint8_t>{0, 1}), 0.5);
}

TEST(AveragePrecision, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_case(rng, 50, trial % 2 == 1);
    EXPECT_NEAR(*average_precision(c.scores, c.labels), ap_oracle(c.scores, c.labels), 1e-12);
  }
}

TEST(RocAuc, PerfectSeparationAndAllTies) {
  const std::vector<std::uint8_t> y{1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(*roc_auc(std::vector<double>{0.9, 0.1, 0.8, 0.2}, y), 1.0);
  EXPECT_DOUBLE_EQ(*roc_auc(std::vector<double>{0.3, 0.3, 0.3, 0.3}, y), 0.5);
}

TEST(RocAuc, UndefinedForSingleClassColumns) {
  const std::vector<double> s{0.1, 0.2};
  EXPECT_FALSE(roc_auc(s, std::vector<std::uint8_t>{1, 1}).has_value());
  EXPECT_FALSE(roc_auc(s, std::vector<std::uint8_t>{0, 0}).has_value());
}

TEST(RocAuc, EqualsPairCountingExactly) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_case(rng, 50, trial % 2 == 1);
    EXPECT_EQ(*roc_auc(c.scores, c.labels), auc_oracle(c.scores, c.labels));
  }
}

TEST(RocAuc, NegatedScoresComplement) {
  std::mt19937_64 rng(13);
  const auto c = random_case(rng, 60, false);
  std::vector<double> neg;
  for (double v : c.scores) neg.push_back(-v);
  EXPECT_NEAR(*roc_auc(c.scores, c.labels) + *roc_auc(neg, c.labels), 1.0, 1e-15);
}

TEST(Metrics, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(14);
  const auto c = random_case(rng, 80, true);
  std::vector<double> t;
  for (double v : c.scores) t.push_back(std::exp(3 * v) - 7);
  EXPECT_EQ(*average_precision(c.scores, c.labels), *average_precision(t, c.labels));
  EXPECT_EQ(*roc_auc(c.scores, c.labels), *roc_auc(t, c.labels));
}

TEST(DPrime, PublishedPairs) {
  EXPECT_NEAR(d_prime(0.9753), 2.778, 0.002);
  EXPECT_NEAR(d_prime(0.973), 2.725, 0.002);
  EXPECT_EQ(d_prime(0.5), 0.0);
}

TEST(DPrime, InverseNormalMatchesErfc) {
  // Phi(x) = erfc(-x / sqrt2) / 2; round-trip through the forward CDF.
  for (double p : {1e-12, 1e-6, 0.01, 0.02425, 0.2, 0.5, 0.77, 0.97575, 0.999, 1 - 1e-9}) {
    const double x = inverse_normal_cdf(p);
    EXPECT_NEAR(0.5 * std::erfc(-x / std::sqrt(2.0)), p, 1e-9 * std::max(p, 1e-3)) << p;
  }
}

TEST(DPrime, MonotoneAndAntisymmetric) {
  double prev = -1e300;
  for (int i = 1; i < 1000; ++i) {
    const double a = i / 1000.0;
    const double d = d_prime(a);
    EXPECT_GT(d, prev);
    prev = d;
    EXPECT_NEAR(d_prime(1 - a), -d, 1e-9);
  }
}

TEST(DPrime, RejectsDegenerateAuc) {
  EXPECT_TRUE(throws_kind([] { d_prime(0.0); }, ErrorKind::invalid_argument));
  EXPECT_TRUE(throws_kind([] { d_prime(1.0); }, ErrorKind::invalid_argument));
}

TEST(Evaluate, PredictionsEqualToLabels) {
  const LabelMatrix y{{1, 0, 1}, {0, 1, 0}, {1, 1, 0}, {0, 0, 1}};
  Matrix<double> p(4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < 3; ++k) p(i, k) = y[i][k];
  const auto r = evaluate(p, y);
  EXPECT_DOUBLE_EQ(r.mAP, 1.0);
  EXPECT_DOUBLE_EQ(r.mean_auc, 1.0);
  EXPECT_FALSE(r.d_prime.has_value());
  EXPECT_EQ(r.num_eval, 4u);
}

TEST(Evaluate, TwoClassToyComposesOracles) {
  const LabelMatrix y{{1, 0}, {0, 1}, {1, 1}, {0, 0}, {1, 0}};
  Matrix<double> p(5, 2, {0.9, 0.1, 0.4, 0.7, 0.3, 0.6, 0.5, 0.2, 0.2, 0.8});
  const auto r = evaluate(p, y);
  double ap = 0, auc = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> s;
    std::vector<std::uint8_t> t;
    for (std::size_t i = 0; i < 5; ++i) {
      s.push_back(p(i, k));
      t.push_back(y[i][k]);
    }
    EXPECT_NEAR(*r.per_class_ap[k], ap_oracle(s, t), 1e-15);
    EXPECT_EQ(*r.per_class_auc[k], auc_oracle(s, t));
    ap += ap_oracle(s, t) / 2;
    auc += auc_oracle(s, t) / 2;
  }
  EXPECT_NEAR(r.mAP, ap, 1e-15);
  EXPECT_NEAR(r.mean_auc, auc, 1e-15);
  EXPECT_NEAR(*r.d_prime, std::sqrt(2.0) * inverse_normal_cdf(auc), 1e-12);
}

TEST(Evaluate, ClassesWithoutPositivesAreExcluded) {
  const LabelMatrix y{{1, 0}, {0, 0}, {1, 0}};
  Matrix<double> p(3, 2, {0.9, 0.5, 0.1, 0.5, 0.8, 0.5});
  const auto r = evaluate(p, y);
  EXPECT_EQ(r.classes_without_positives, 1u);
  EXPECT_FALSE(r.per_class_ap[1].has_value());
  EXPECT_DOUBLE_EQ(r.mAP, 1.0);
}

TEST(Evaluate, InvariantUnderClassPermutation) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(0, 1);
  const std::size_t N = 40, C = 5;
  LabelMatrix y(N, LabelSet(C));
  Matrix<double> p(N, C);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < C; ++k) {
      y[i][k] = u(rng) < 0.4;
      p(i, k) = u(rng);
    }
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  LabelMatrix yp(N, LabelSet(C));
  Matrix<double> pp(N, C);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < C; ++k) {
      yp[i][k] = y[i][perm[k]];
      pp(i, k) = p(i, perm[k]);
    }
  EXPECT_NEAR(evaluate(p, y).mAP, evaluate(pp, yp).mAP, 1e-15);
}

TEST(Evaluate, DimensionErrors) {
  Matrix<double> p(2, 2);
  EXPECT_TRUE(throws_kind([&] { evaluate(p, LabelMatrix{{1, 0}}); }, ErrorKind::shape_mismatch));
  EXPECT_TRUE(throws_kind([&] { evaluate(p, LabelMatrix{{1, 0, 0}, {0, 1, 0}}); }, ErrorKind::shape_mismatch));
  EXPECT_TRUE(throws_kind([&] { evaluate(p, LabelMatrix{{0, 0}, {0, 0}}); }, ErrorKind::invalid_argument));
}

TEST(Headline, MeanOfLastFiveEpochs) {
  const std::vector<double> maps{0.1, 0.2, 0.30, 0.31, 0.32, 0.33, 0.34};
  EXPECT_NEAR(mean_of_last(maps, 5), (0.30 + 0.31 + 0.32 + 0.33 + 0.34) / 5, 1e-15);
  EXPECT_NEAR(mean_of_last(std::vector<double>{0.4, 0.6}, 5), 0.5, 1e-15);
}

TEST(Correlate, SelfAndNegation) {
  const std::vector<double> ap{0.1, 0.5, 0.3, 0.9, 0.7};
  std::vector<double> neg;
  for (double v : ap) neg.push_back(-v);
  EXPECT_NEAR(correlate(ap, ap), 1.0, 1e-15);
  EXPECT_NEAR(correlate(ap, neg), -1.0, 1e-15);
}

TEST(Correlate, MatchesTextbookFormula) {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> x(20), y(20);
  for (std::size_t i = 0; i < 20; ++i) {
    x[i] = n(rng);
    y[i] = 0.5 * x[i] + n(rng);
  }
  // r = (n Sxy - Sx Sy) / sqrt((n Sxx - Sx^2)(n Syy - Sy^2))
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
  }
  const double r = (20 * sxy - sx * sy) / std::sqrt((20 * sxx - sx * sx) * (20 * syy - sy * sy));
  EXPECT_NEAR(correlate(x, y), r, 1e-12);
}

TEST(Correlate, ZeroVarianceIsAnError) {
  const std::vector<double> flat{1, 1, 1}, v{1, 2, 3};
  EXPECT_TRUE(throws_kind([&] { correlate(flat, v); }, ErrorKind::invalid_argument));
}

TEST(EvalReport, JsonRoundTrip) {
  const LabelMatrix y{{1, 0}, {0, 1}, {1, 1}, {0, 0}};
  Matrix<double> p(4, 2, {0.9, 0.1, 0.4, 0.7, 0.3, 0.6, 0.5, 0.2});
  const auto r = evaluate(p, y);
  const auto j = to_json(r, {"a", "b"});
  EXPECT_EQ(eval_report_from_json(nlohmann::json::parse(j.dump())), r);
  std::ostringstream csv;
  write_class_csv(csv, r, {"a", "b"});
  EXPECT_EQ(csv.str().substr(0, 19), "class,ap,auc,count\n");
}

}  // namespace
}  // namespace psla
