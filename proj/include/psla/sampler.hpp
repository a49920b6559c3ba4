// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

#include "psla/augment.hpp"
#include "psla/corpus.hpp"
#include "psla/error.hpp"
#include "psla/rng.hpp"
#include "psla/text.hpp"

namespace psla {

/// Per-sample sampling weights w_i = sum over labels k of 1 / c_k.
struct SamplingWeights {
  std::vector<double> w;

  std::size_t size() const noexcept { return w.size(); }
};

inline SamplingWeights make_weights(const ClassTable& classes, const LabelMatrix& labels) {
  SamplingWeights out;
  out.w.assign(labels.size(), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& y = labels[i];
    detail::require(y.size() == classes.size(), "label vector length differs from class count");
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (!y[k]) continue;
      if (classes.counts[k] == 0)
        throw Error(ErrorKind::invalid_argument, "class " + classes.names[k] + " is labeled but has count 0");
      out.w[i] += 1.0 / static_cast<double>(classes.counts[k]);
    }
    if (!(out.w[i] > 0.0))
      throw Error(ErrorKind::invalid_argument, "sample " + std::to_string(i) + " would get zero sampling weight");
  }
  return out;
}

inline SamplingWeights make_weights(const MultiLabelCorpus& corpus) {
  return make_weights(corpus.classes(), corpus.labels());
}

struct AugmentConfig {
  std::size_t freq_mask = 48;   ///< F, max frequency-mask length
  std::size_t time_mask = 192;  ///< T, max time-mask length
  double mixup_rate = 0.5;      ///< M
  double alpha = 10.0;          ///< Beta(alpha, alpha) for the mixing weight
  bool balanced = true;

  bool operator==(const AugmentConfig&) const = default;
};

inline void validate(const AugmentConfig& c, FeatureShape shape) {
  detail::require(c.freq_mask <= shape.bins, "frequency mask F exceeds the number of bins");
  detail::require(c.time_mask <= shape.frames, "time mask T exceeds the number of frames");
  detail::require(c.mixup_rate >= 0.0 && c.mixup_rate <= 1.0, "mixup rate must lie in [0, 1]");
  detail::require(c.alpha > 0.0 && std::isfinite(c.alpha), "mixup alpha must be positive");
}

struct Draw {
  std::size_t primary = 0;
  bool is_mixup = false;
  std::size_t partner = 0;  ///< equals primary when !is_mixup
  double lambda = 1.0;
  MaskParams mask;

  bool operator==(const Draw&) const = default;
};

struct EpochPlan {
  std::vector<Draw> draws;

  bool operator==(const EpochPlan&) const = default;
};

/// Pre-draws one epoch: N primaries (balanced multinomial with replacement,
/// or a fresh permutation), the mixup gate with a uniform partner and
/// Beta-distributed weight, and integer mask extents/offsets.
inline EpochPlan plan_epoch(const SamplingWeights& weights, const AugmentConfig& config, FeatureShape shape,
                            std::uint64_t seed) {
  validate(config, shape);
  const std::size_t N = weights.size();
  detail::require(N >= 1, "cannot plan an epoch over zero samples");
  for (double w : weights.w) detail::require(w > 0.0 && std::isfinite(w), "sampling weights must be positive");

  Rng rng(seed);
  std::vector<std::size_t> order;
  std::discrete_distribution<std::size_t> multinomial;
  if (config.balanced) {
    multinomial = std::discrete_distribution<std::size_t>(weights.w.begin(), weights.w.end());
  } else {
    order.resize(N);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
  }

  const auto last = static_cast<std::int64_t>(N - 1);
  const auto F = static_cast<std::int64_t>(config.freq_mask);
  const auto T = static_cast<std::int64_t>(config.time_mask);
  EpochPlan plan;
  plan.draws.resize(N);
  for (std::size_t n = 0; n < N; ++n) {
    Draw& d = plan.draws[n];
    d.primary = config.balanced ? multinomial(rng) : order[n];
    d.partner = d.primary;
    if (rng.uniform() < config.mixup_rate) {
      d.is_mixup = true;
      d.partner = static_cast<std::size_t>(rng.uniform_int(0, last));
      d.lambda = rng.beta(config.alpha, config.alpha);
    }
    d.mask.f = static_cast<std::size_t>(rng.uniform_int(0, F));
    d.mask.f0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(shape.bins - d.mask.f)));
    d.mask.t = static_cast<std::size_t>(rng.uniform_int(0, T));
    d.mask.t0 = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(shape.frames - d.mask.t)));
  }
  return plan;
}

/// Seed of the plan for a given 1-based epoch under a sampler stream seed.
inline std::uint64_t epoch_seed(std::uint64_t sampler_seed, std::size_t epoch) {
  return derive_seed(sampler_seed, static_cast<std::uint64_t>(epoch));
}

struct CoverageTrace {
  std::vector<double> unseen_fraction;           ///< after epochs 1..E
  std::vector<std::size_t> class_frequency;      ///< label occurrences among sampled inputs
};

/// Replays the epoch plans a trainer would consume and tracks how many
/// samples were never fed to the model (as primary or mixup partner).
inline CoverageTrace simulate_coverage(const SamplingWeights& weights, const LabelMatrix& labels,
                                       const AugmentConfig& config, FeatureShape shape, std::size_t epochs,
                                       std::uint64_t seed) {
  detail::require(epochs >= 1, "coverage needs at least one epoch");
  detail::require(labels.size() == weights.size(), "labels and weights differ in length");
  const std::size_t N = weights.size();
  const std::size_t C = labels.empty() ? 0 : labels.front().size();
  CoverageTrace trace;
  trace.class_frequency.assign(C, 0);
  std::vector<char> seen(N, 0);
  std::size_t seen_count = 0;
  auto visit = [&](std::size_t i) {
    if (!seen[i]) {
      seen[i] = 1;
      ++seen_count;
    }
    for (std::size_t k = 0; k < C; ++k) trace.class_frequency[k] += labels[i][k] ? 1 : 0;
  };
  for (std::size_t e = 1; e <= epochs; ++e) {
    const auto plan = plan_epoch(weights, config, shape, epoch_seed(seed, e));
    for (const auto& d : plan.draws) {
      visit(d.primary);
      if (d.is_mixup) visit(d.partner);
    }
    trace.unseen_fraction.push_back(static_cast<double>(N - seen_count) / static_cast<double>(N));
  }
  return trace;
}

inline void write_epoch_plan(std::ostream& os, const EpochPlan& plan) {
  os << "# primary is_mixup partner lambda f0 f t0 t\n";
  for (const auto& d : plan.draws) {
    os << d.primary << ' ' << (d.is_mixup ? 1 : 0) << ' ' << d.partner << ' ' << text::format_real(d.lambda) << ' '
       << d.mask.f0 << ' ' << d.mask.f << ' ' << d.mask.t0 << ' ' << d.mask.t << '\n';
  }
}

inline EpochPlan parse_epoch_plan(std::string_view content) {
  EpochPlan plan;
  std::size_t line_no = 0;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    line = text::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto f = text::split_ws(line);
    auto bad = [&] { return Error(ErrorKind::malformed_manifest, "epoch plan line " + std::to_string(line_no)); };
    if (f.size() != 8) throw bad();
    Draw d;
    auto u = [&](std::size_t j) {
      auto v = text::parse_int<std::size_t>(f[j]);
      if (!v) throw bad();
      return *v;
    };
    d.primary = u(0);
    d.is_mixup = u(1) != 0;
    d.partner = u(2);
    const auto lambda = text::parse_real(f[3]);
    if (!lambda) throw bad();
    d.lambda = *lambda;
    d.mask = {u(4), u(5), u(6), u(7)};
    plan.draws.push_back(d);
  }
  return plan;
}

inline void write_coverage_csv(std::ostream& os, const CoverageTrace& trace) {
  os << "epoch,unseen_fraction\n";
  for (std::size_t e = 0; e < trace.unseen_fraction.size(); ++e)
    os << (e + 1) << ',' << text::format_real(trace.unseen_fraction[e]) << '\n';
}

}  // namespace psla
