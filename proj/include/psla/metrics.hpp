// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "psla/corpus.hpp"
#include "psla/error.hpp"
#include "psla/matrix.hpp"
#include "psla/text.hpp"

namespace psla {

/// Non-interpolated average precision: the mean, over positives, of the
/// precision at each positive's rank. Ranking is a stable descending sort,
/// so tied scores keep their input order. Returns nullopt without positives.
inline std::optional<double> average_precision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  detail::require(scores.size() == labels.size(), "scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!labels[order[r]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

/// ROC AUC through the Mann-Whitney rank statistic with mid-ranks for ties.
/// Ranks are kept doubled so the statistic is an exact integer.
inline std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  detail::require(scores.size() == labels.size(), "scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::uint64_t positives = 0;
  std::uint64_t rank_sum_x2 = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t mid_rank_x2 = i + 1 + j;  // (i+1 + j), ranks are 1-based
    for (std::size_t m = i; m < j; ++m) {
      if (labels[order[m]]) {
        ++positives;
        rank_sum_x2 += mid_rank_x2;
      }
    }
    i = j;
  }
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const std::uint64_t u_x2 = rank_sum_x2 - positives * (positives + 1);
  return static_cast<double>(u_x2) / static_cast<double>(2 * positives * negatives);
}

/// Standard-normal quantile: Acklam's rational approximation refined by one
/// Halley step against erfc, which brings it to near machine precision.
inline double inverse_normal_cdf(double p) {
  detail::require(p > 0.0 && p < 1.0, "inverse normal CDF needs p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p <= 1 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  } else {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::numbers::sqrt2) - p;
  const double u = e * std::sqrt(2 * std::numbers::pi) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

/// Sensitivity index d' = sqrt(2) * Phi^-1(AUC).
inline double d_prime(double auc) {
  if (!(auc > 0.0 && auc < 1.0)) throw Error(ErrorKind::invalid_argument, "d' needs AUC strictly inside (0, 1)");
  if (auc == 0.5) return 0.0;
  return std::numbers::sqrt2 * inverse_normal_cdf(auc);
}

struct EvalReport {
  std::vector<std::optional<double>> per_class_ap;
  std::vector<std::optional<double>> per_class_auc;
  std::vector<std::size_t> positives;
  double mAP = 0.0;
  double mean_auc = 0.0;
  std::optional<double> d_prime;  ///< nullopt when mean AUC is 0 or 1
  std::size_t num_eval = 0;
  std::size_t classes_without_positives = 0;  ///< excluded from mAP

  bool operator==(const EvalReport&) const = default;
};

inline EvalReport evaluate(const Matrix<double>& predictions, const LabelMatrix& labels) {
  const std::size_t N = predictions.rows();
  const std::size_t C = predictions.cols();
  if (labels.size() != N) throw Error(ErrorKind::shape_mismatch, "prediction and label row counts differ");
  for (const auto& y : labels)
    if (y.size() != C) throw Error(ErrorKind::shape_mismatch, "prediction and label column counts differ");

  EvalReport report;
  report.num_eval = N;
  std::vector<double> scores(N);
  std::vector<std::uint8_t> truth(N);
  double ap_sum = 0.0, auc_sum = 0.0;
  std::size_t ap_n = 0, auc_n = 0;
  for (std::size_t k = 0; k < C; ++k) {
    for (std::size_t i = 0; i < N; ++i) {
      scores[i] = predictions(i, k);
      truth[i] = labels[i][k] ? 1 : 0;
    }
    report.positives.push_back(static_cast<std::size_t>(std::count(truth.begin(), truth.end(), 1)));
    const auto ap = average_precision(scores, truth);
    const auto auc = roc_auc(scores, truth);
    report.per_class_ap.push_back(ap);
    report.per_class_auc.push_back(auc);
    if (ap) {
      ap_sum += *ap;
      ++ap_n;
    } else {
      ++report.classes_without_positives;
    }
    if (auc) {
      auc_sum += *auc;
      ++auc_n;
    }
  }
  if (ap_n == 0 || auc_n == 0) throw Error(ErrorKind::invalid_argument, "every class is degenerate on this split");
  report.mAP = ap_sum / static_cast<double>(ap_n);
  report.mean_auc = auc_sum / static_cast<double>(auc_n);
  if (report.mean_auc > 0.0 && report.mean_auc < 1.0) report.d_prime = d_prime(report.mean_auc);
  return report;
}

/// Mean of the last k values (all of them if fewer than k).
inline double mean_of_last(std::span<const double> values, std::size_t k) {
  detail::require(!values.empty() && k >= 1, "need at least one value");
  const std::size_t n = std::min(k, values.size());
  return std::accumulate(values.end() - static_cast<std::ptrdiff_t>(n), values.end(), 0.0) / static_cast<double>(n);
}

/// Pearson correlation coefficient.
inline double correlate(std::span<const double> x, std::span<const double> y) {
  detail::require(x.size() == y.size(), "correlation inputs differ in length");
  detail::require(x.size() >= 3, "correlation needs at least 3 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorKind::invalid_argument, "correlation input has zero variance");
  return sxy / std::sqrt(sxx * syy);
}

inline nlohmann::json to_json(const EvalReport& r, const std::vector<std::string>& class_names = {}) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j;
  j["mAP"] = r.mAP;
  j["mean_auc"] = r.mean_auc;
  j["d_prime"] = opt(r.d_prime);
  j["num_eval"] = r.num_eval;
  j["classes_without_positives"] = r.classes_without_positives;
  auto& per = j["per_class"] = nlohmann::json::array();
  for (std::size_t k = 0; k < r.per_class_ap.size(); ++k) {
    per.push_back({{"class", k < class_names.size() ? class_names[k] : std::to_string(k)},
                   {"ap", opt(r.per_class_ap[k])},
                   {"auc", opt(r.per_class_auc[k])},
                   {"count", r.positives[k]}});
  }
  return j;
}

inline EvalReport eval_report_from_json(const nlohmann::json& j) {
  auto opt = [](const nlohmann::json& v) { return v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()); };
  EvalReport r;
  r.mAP = j.at("mAP").get<double>();
  r.mean_auc = j.at("mean_auc").get<double>();
  r.d_prime = opt(j.at("d_prime"));
  r.num_eval = j.at("num_eval").get<std::size_t>();
  r.classes_without_positives = j.at("classes_without_positives").get<std::size_t>();
  for (const auto& c : j.at("per_class")) {
    r.per_class_ap.push_back(opt(c.at("ap")));
    r.per_class_auc.push_back(opt(c.at("auc")));
    r.positives.push_back(c.at("count").get<std::size_t>());
  }
  return r;
}

/// Class-wise CSV: class, AP, AUC, count (empty cell for undefined metrics).
inline void write_class_csv(std::ostream& os, const EvalReport& r, const std::vector<std::string>& class_names) {
  auto cell = [](const std::optional<double>& v) { return v ? text::format_real(*v) : std::string(); };
  os << "class,ap,auc,count\n";
  for (std::size_t k = 0; k < r.per_class_ap.size(); ++k)
    os << (k < class_names.size() ? class_names[k] : std::to_string(k)) << ',' << cell(r.per_class_ap[k]) << ','
       << cell(r.per_class_auc[k]) << ',' << r.positives[k] << '\n';
}

}  // namespace psla
