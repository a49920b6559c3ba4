// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "psla/corpus.hpp"
#include "psla/error.hpp"
#include "psla/matrix.hpp"
#include "psla/metrics.hpp"
#include "psla/model.hpp"
#include "psla/text.hpp"

namespace psla {

namespace detail {

/// Coordinatewise arithmetic mean of equally sized vectors. Inputs are
/// combined in the given order; the result is clamped to each coordinate's
/// [min, max] and equals the shared value exactly when all inputs agree.
inline std::vector<double> coordinate_mean(const std::vector<const std::vector<double>*>& rows) {
  require(!rows.empty(), "mean of nothing");
  const std::size_t n = rows.front()->size();
  std::vector<double> out(n, 0.0);
  const double count = static_cast<double>(rows.size());
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0, lo = (*rows.front())[i], hi = lo;
    for (const auto* r : rows) {
      const double v = (*r)[i];
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    out[i] = lo == hi ? lo : std::clamp(sum / count, lo, hi);
  }
  return out;
}

}  // namespace detail

/// Arithmetic mean of all checkpoints with epoch >= start_epoch. The window
/// is summed in epoch order, so the result does not depend on list order.
inline ParameterVector average_weights(std::span<const Checkpoint> checkpoints, std::size_t start_epoch) {
  std::vector<const Checkpoint*> window;
  for (const auto& c : checkpoints)
    if (c.epoch >= start_epoch) window.push_back(&c);
  if (window.empty())
    throw Error(ErrorKind::empty_window, "no checkpoint at or after epoch " + std::to_string(start_epoch));
  std::stable_sort(window.begin(), window.end(), [](const Checkpoint* a, const Checkpoint* b) {
    if (a->epoch != b->epoch) return a->epoch < b->epoch;
    return a->params.values < b->params.values;
  });
  std::vector<const std::vector<double>*> rows;
  for (const auto* c : window) {
    if (c->params.manifest != window.front()->params.manifest ||
        c->params.values.size() != window.front()->params.values.size())
      throw Error(ErrorKind::manifest_mismatch, "checkpoint manifests differ inside the averaging window");
    rows.push_back(&c->params.values);
  }
  return ParameterVector{detail::coordinate_mean(rows), window.front()->params.manifest};
}

/// Prediction matrices (N_eval x C) of a model committee.
struct Committee {
  std::vector<Matrix<double>> members;
  std::vector<std::string> tags;  ///< provenance, e.g. "run-a:epoch30"

  void add(Matrix<double> m, std::string tag) {
    members.push_back(std::move(m));
    tags.push_back(std::move(tag));
  }
};

/// Elementwise mean of the member matrices.
inline Matrix<double> ensemble_mean(const Committee& committee) {
  if (committee.members.empty()) throw Error(ErrorKind::invalid_argument, "empty committee");
  const auto& first = committee.members.front();
  std::vector<const std::vector<double>*> rows;
  for (const auto& m : committee.members) {
    if (!m.same_shape(first)) throw Error(ErrorKind::shape_mismatch, "committee members differ in dimensions");
    rows.push_back(&m.values());
  }
  return Matrix<double>(first.rows(), first.cols(), detail::coordinate_mean(rows));
}

/// Averages pre-sigmoid logits and maps back to probabilities.
inline Matrix<double> ensemble_logit_mean(const Committee& logit_committee) {
  auto m = ensemble_mean(logit_committee);
  for (auto& v : m.values()) v = sigmoid(v);
  return m;
}

/// mAP as a function of the epoch at which averaging starts (window runs to
/// the last epoch), for three aggregates.
struct StartEpochSweep {
  std::vector<std::size_t> start_epoch;
  std::vector<double> weight_avg_map;        ///< one model from averaged parameters
  std::vector<double> prediction_avg_map;    ///< mean of checkpoint probabilities
  std::vector<double> logit_avg_map;         ///< mean of checkpoint logits, then sigmoid
};

inline StartEpochSweep sweep_start_epoch(const Model& model, std::span<const Checkpoint> checkpoints,
                                         const MultiLabelCorpus& eval) {
  if (checkpoints.empty()) throw Error(ErrorKind::empty_window, "no checkpoints to sweep");
  std::vector<const Checkpoint*> ordered;
  for (const auto& c : checkpoints) ordered.push_back(&c);
  std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->epoch < b->epoch; });
  const auto labels = eval.labels();
  std::vector<Matrix<double>> probs, logits;
  for (const auto* c : ordered) {
    logits.push_back(predict(model, c->params, eval, true));
    auto p = logits.back();
    for (auto& v : p.values()) v = sigmoid(v);
    probs.push_back(std::move(p));
  }
  StartEpochSweep sweep;
  for (std::size_t s = 0; s < ordered.size(); ++s) {
    const std::size_t start = ordered[s]->epoch;
    Committee pc, lc;
    for (std::size_t j = s; j < ordered.size(); ++j) {
      pc.add(probs[j], std::to_string(ordered[j]->epoch));
      lc.add(logits[j], std::to_string(ordered[j]->epoch));
    }
    const auto avg = average_weights(checkpoints, start);
    sweep.start_epoch.push_back(start);
    sweep.weight_avg_map.push_back(evaluate(predict(model, avg, eval), labels).mAP);
    sweep.prediction_avg_map.push_back(evaluate(ensemble_mean(pc), labels).mAP);
    sweep.logit_avg_map.push_back(evaluate(ensemble_logit_mean(lc), labels).mAP);
  }
  return sweep;
}

/// Prediction-averaging curve only, from per-epoch member predictions
/// (ordered by epoch, first element = epoch 1).
inline std::vector<double> sweep_prediction_average(std::span<const Matrix<double>> per_epoch,
                                                    const LabelMatrix& labels) {
  std::vector<double> curve;
  for (std::size_t s = 0; s < per_epoch.size(); ++s) {
    Committee c;
    for (std::size_t j = s; j < per_epoch.size(); ++j) c.add(per_epoch[j], std::to_string(j + 1));
    curve.push_back(evaluate(ensemble_mean(c), labels).mAP);
  }
  return curve;
}

inline void write_sweep_csv(std::ostream& os, const StartEpochSweep& s) {
  os << "start_epoch,weight_avg_map,prediction_avg_map,logit_avg_map\n";
  for (std::size_t i = 0; i < s.start_epoch.size(); ++i)
    os << s.start_epoch[i] << ',' << text::format_real(s.weight_avg_map[i]) << ','
       << text::format_real(s.prediction_avg_map[i]) << ',' << text::format_real(s.logit_avg_map[i]) << '\n';
}

}  // namespace psla
