// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "psla/corpus.hpp"
#include "psla/error.hpp"
#include "psla/matrix.hpp"
#include "psla/ontology.hpp"
#include "psla/rng.hpp"

namespace psla {

/// How a class's label-modification threshold is derived from the teacher
/// scores of the clips originally labeled with that class. `fixed` uses one
/// constant for every class.
enum class ThresholdPolicy { mean, p25, p10, p5, fixed };

inline std::string_view to_string(ThresholdPolicy p) {
  switch (p) {
    case ThresholdPolicy::mean: return "mean";
    case ThresholdPolicy::p25: return "p25";
    case ThresholdPolicy::p10: return "p10";
    case ThresholdPolicy::p5: return "p5";
    case ThresholdPolicy::fixed: return "fixed";
  }
  return "?";
}

inline ThresholdPolicy parse_threshold_policy(std::string_view s) {
  if (s == "mean") return ThresholdPolicy::mean;
  if (s == "p25" || s == "25P") return ThresholdPolicy::p25;
  if (s == "p10" || s == "10P") return ThresholdPolicy::p10;
  if (s == "p5" || s == "5P") return ThresholdPolicy::p5;
  if (s == "fixed") return ThresholdPolicy::fixed;
  throw Error(ErrorKind::invalid_argument, "unknown threshold policy '" + std::string(s) + "'");
}

enum class RepairMode { type1, type2, both };

inline std::string_view to_string(RepairMode m) {
  switch (m) {
    case RepairMode::type1: return "type1";
    case RepairMode::type2: return "type2";
    case RepairMode::both: return "both";
  }
  return "?";
}

inline RepairMode parse_repair_mode(std::string_view s) {
  if (s == "type1") return RepairMode::type1;
  if (s == "type2") return RepairMode::type2;
  if (s == "both") return RepairMode::both;
  throw Error(ErrorKind::invalid_argument, "unknown repair mode '" + std::string(s) + "'");
}

struct ThresholdSet {
  std::vector<std::optional<double>> t;  ///< nullopt: class has no positives
  ThresholdPolicy policy = ThresholdPolicy::mean;
};

/// Nearest-rank percentile of an ascending list: element ceil(pct/100 * n).
inline double nearest_rank_percentile(std::span<const double> sorted, double pct) {
  detail::require(!sorted.empty(), "percentile of an empty list");
  const auto n = static_cast<double>(sorted.size());
  const auto rank = static_cast<std::size_t>(std::clamp(std::ceil(pct / 100.0 * n), 1.0, n));
  return sorted[rank - 1];
}

inline ThresholdSet make_thresholds(const Matrix<double>& scores, const LabelMatrix& labels, ThresholdPolicy policy,
                                   double fixed_value = 0.5) {
  if (scores.rows() != labels.size()) throw Error(ErrorKind::shape_mismatch, "scores and labels differ in rows");
  ThresholdSet out;
  out.policy = policy;
  std::vector<double> pos;
  for (std::size_t k = 0; k < scores.cols(); ++k) {
    pos.clear();
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i].size() != scores.cols()) throw Error(ErrorKind::shape_mismatch, "label row has wrong length");
      if (labels[i][k]) pos.push_back(scores(i, k));
    }
    if (pos.empty()) {
      out.t.emplace_back(std::nullopt);
      continue;
    }
    std::sort(pos.begin(), pos.end());
    double t = 0.0;
    switch (policy) {
      case ThresholdPolicy::mean: {
        double sum = 0.0;
        for (double s : pos) sum += s;
        t = sum / static_cast<double>(pos.size());
        break;
      }
      case ThresholdPolicy::p25: t = nearest_rank_percentile(pos, 25); break;
      case ThresholdPolicy::p10: t = nearest_rank_percentile(pos, 10); break;
      case ThresholdPolicy::p5: t = nearest_rank_percentile(pos, 5); break;
      case ThresholdPolicy::fixed: t = fixed_value; break;
    }
    out.t.emplace_back(t);
  }
  return out;
}

struct EnhanceOptions {
  bool strict = true;             ///< false: skip undefined-threshold candidates
  std::string call_site = "train";
};

struct EnhanceAudit {
  std::string call_site;
  RepairMode mode = RepairMode::both;
  std::size_t original_labels = 0;
  std::size_t labels_added = 0;
  double percent_added = 0.0;  ///< labels_added / original_labels * 100
  std::vector<std::size_t> added_per_class;
  std::vector<ClassId> impacted_classes;   ///< classes that gained at least one label
  std::vector<ClassId> skipped_undefined;  ///< candidates skipped in permissive mode
};

struct EnhanceResult {
  LabelMatrix labels;
  EnhanceAudit audit;
};

/// Ontology-constrained label repair. For every original label k of a clip,
/// each one-hop neighbor allowed by the mode (children for Type I, parents for
/// Type II) is added when the teacher score strictly exceeds its threshold.
/// Candidates come from the original labels only; labels are never removed.
inline EnhanceResult enhance(const LabelMatrix& labels, const Matrix<double>& scores, const Ontology& onto,
                             const ThresholdSet& thresholds, RepairMode mode, const EnhanceOptions& options = {}) {
  const std::size_t C = onto.num_classes();
  if (scores.rows() != labels.size() || scores.cols() != C || thresholds.t.size() != C)
    throw Error(ErrorKind::shape_mismatch, "labels, scores, ontology and thresholds disagree on dimensions");
  validate(onto);

  EnhanceResult result{labels, {}};
  auto& audit = result.audit;
  audit.call_site = options.call_site;
  audit.mode = mode;
  audit.added_per_class.assign(C, 0);
  std::vector<char> skipped(C, 0);
  const bool use_children = mode != RepairMode::type2;
  const bool use_parents = mode != RepairMode::type1;

  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& y = labels[i];
    if (y.size() != C) throw Error(ErrorKind::shape_mismatch, "label row has wrong length");
    auto& out = result.labels[i];
    auto consider = [&](ClassId kn) {
      if (y[kn]) return;
      const auto& t = thresholds.t[kn];
      if (!t) {
        if (options.strict)
          throw Error(ErrorKind::undefined_threshold, "class " + std::to_string(kn) + " has no threshold");
        skipped[kn] = 1;
        return;
      }
      if (scores(i, kn) > *t && !out[kn]) {
        out[kn] = 1;
        ++audit.added_per_class[kn];
        ++audit.labels_added;
      }
    };
    for (ClassId k = 0; k < C; ++k) {
      if (!y[k]) continue;
      ++audit.original_labels;
      if (use_children)
        for (ClassId kn : onto.children(k)) consider(kn);
      if (use_parents)
        for (ClassId kn : onto.parents(k)) consider(kn);
    }
  }
  for (ClassId k = 0; k < C; ++k) {
    if (audit.added_per_class[k] > 0) audit.impacted_classes.push_back(k);
    if (skipped[k]) audit.skipped_undefined.push_back(k);
  }
  audit.percent_added = audit.original_labels == 0 ? 0.0
                                                   : 100.0 * static_cast<double>(audit.labels_added) /
                                                         static_cast<double>(audit.original_labels);
  return result;
}

/// Same repair applied to an evaluation split; the audit records the call site.
inline EnhanceResult enhance_eval_set(const LabelMatrix& labels, const Matrix<double>& scores, const Ontology& onto,
                                      const ThresholdSet& thresholds, RepairMode mode = RepairMode::both,
                                      EnhanceOptions options = {}) {
  options.call_site = "eval";
  return enhance(labels, scores, onto, thresholds, mode, options);
}

inline void write_audit_csv(std::ostream& os, const EnhanceAudit& audit, const std::vector<std::string>& class_names) {
  os << "class,labels_added,impacted\n";
  for (std::size_t k = 0; k < audit.added_per_class.size(); ++k)
    os << (k < class_names.size() ? class_names[k] : std::to_string(k)) << ',' << audit.added_per_class[k] << ','
       << (audit.added_per_class[k] > 0 ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------
// Planted-error benchmark: a two-level ontology with known label deletions.

struct PlantedErrorBenchmark {
  std::vector<std::string> class_names;
  Ontology ontology;
  LabelMatrix truth;
  LabelMatrix corrupted;
  LabelMatrix deleted_type1;  ///< deleted child labels
  LabelMatrix deleted_type2;  ///< deleted parent labels
  Matrix<double> teacher;     ///< truth +- noise, clipped to [0, 1]
  std::size_t deleted_count = 0;
};

/// 2 parents x 3 children. Each clip carries one or two full branches
/// (parent + 1-2 children); per branch either one child (Type I) or the
/// parent (Type II) may be deleted, never both, so every deletion has an
/// original neighbor to be recovered from.
inline PlantedErrorBenchmark make_planted_error_benchmark(std::uint64_t seed, std::size_t num_samples = 200,
                                                          double noise = 0.05) {
  PlantedErrorBenchmark b;
  b.class_names = {"Speech", "Music", "MaleSpeech", "FemaleSpeech", "ChildSpeech", "HappyMusic", "SadMusic", "Song"};
  const std::size_t C = b.class_names.size();
  b.ontology = Ontology(C);
  for (ClassId c = 2; c <= 4; ++c) b.ontology.add_edge(0, c);
  for (ClassId c = 5; c <= 7; ++c) b.ontology.add_edge(1, c);

  Rng rng = Rng(seed).split("planted");
  b.truth.assign(num_samples, LabelSet(C, 0));
  b.corrupted = b.truth;
  b.deleted_type1 = b.truth;
  b.deleted_type2 = b.truth;
  for (std::size_t i = 0; i < num_samples; ++i) {
    const ClassId first = static_cast<ClassId>(rng.uniform_int(0, 1));
    std::vector<ClassId> branches{first};
    if (rng.uniform() < 0.25) branches.push_back(1 - first);
    for (ClassId parent : branches) {
      std::vector<ClassId> kids = b.ontology.children(parent);
      std::shuffle(kids.begin(), kids.end(), rng);
      const std::size_t n_kids = rng.uniform() < 0.3 ? 2 : 1;
      b.truth[i][parent] = 1;
      b.corrupted[i][parent] = 1;
      for (std::size_t n = 0; n < n_kids; ++n) b.truth[i][kids[n]] = b.corrupted[i][kids[n]] = 1;
      const double u = rng.uniform();
      if (u < 1.0 / 3.0) {
        b.corrupted[i][kids[0]] = 0;
        b.deleted_type1[i][kids[0]] = 1;
        ++b.deleted_count;
      } else if (u < 2.0 / 3.0) {
        b.corrupted[i][parent] = 0;
        b.deleted_type2[i][parent] = 1;
        ++b.deleted_count;
      }
    }
  }
  b.teacher = Matrix<double>(num_samples, C);
  for (std::size_t i = 0; i < num_samples; ++i)
    for (std::size_t k = 0; k < C; ++k)
      b.teacher(i, k) = std::clamp(static_cast<double>(b.truth[i][k]) + noise * (2 * rng.uniform() - 1), 0.0, 1.0);
  return b;
}

}  // namespace psla
