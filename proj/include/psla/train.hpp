// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "psla/augment.hpp"
#include "psla/corpus.hpp"
#include "psla/error.hpp"
#include "psla/metrics.hpp"
#include "psla/model.hpp"
#include "psla/rng.hpp"
#include "psla/sampler.hpp"
#include "psla/text.hpp"

namespace psla {

/// Linear warm-up over the first `warmup_iters` iterations, then the base
/// rate until `decay_start_epoch`, then halved (decay_factor) every
/// `decay_period` epochs.
struct LRSchedule {
  double base_lr = 1e-3;
  std::size_t warmup_iters = 1000;
  std::size_t decay_start_epoch = 35;
  std::size_t decay_period = 5;
  double decay_factor = 0.5;

  /// Post-warm-up rate of a 1-based epoch.
  double epoch_lr(std::size_t epoch) const {
    if (epoch <= decay_start_epoch) return base_lr;
    const auto steps = (epoch - decay_start_epoch - 1) / decay_period + 1;
    return base_lr * std::pow(decay_factor, static_cast<double>(steps));
  }

  /// Rate at a 1-based global iteration inside a 1-based epoch.
  double lr(std::size_t iteration, std::size_t epoch) const {
    const double warm = warmup_iters == 0 ? 1.0
                                          : std::min(1.0, static_cast<double>(iteration) /
                                                              static_cast<double>(warmup_iters));
    return epoch_lr(epoch) * warm;
  }

  /// First epoch whose rate is at most base/4; the default weight-averaging
  /// window start. Falls back to `epochs` when training ends earlier.
  std::size_t quarter_lr_epoch(std::size_t epochs) const {
    for (std::size_t e = 1; e <= epochs; ++e)
      if (epoch_lr(e) <= base_lr / 4 * (1 + 1e-12)) return e;
    return epochs;
  }

  bool operator==(const LRSchedule&) const = default;
};

inline void validate(const LRSchedule& s) {
  detail::require(s.base_lr > 0 && std::isfinite(s.base_lr), "base learning rate must be positive");
  detail::require(s.decay_period >= 1, "decay period must be >= 1");
  detail::require(s.decay_factor > 0 && s.decay_factor <= 1, "decay factor must lie in (0, 1]");
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  bool operator==(const AdamConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 60;
  std::size_t batch_size = 100;
  LRSchedule schedule;
  AdamConfig adam;
  std::uint64_t seed = 0;  ///< fans out to the "sampler" and "init" streams
  std::size_t report_last_k = 5;
  double mask_value = 0.0;

  bool operator==(const TrainConfig&) const = default;
};

inline void validate(const TrainConfig& c) {
  detail::require(c.epochs >= 1, "training needs at least one epoch");
  detail::require(c.batch_size >= 1, "batch size must be >= 1");
  detail::require(c.report_last_k >= 1, "report_last_k must be >= 1");
  validate(c.schedule);
}

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t iteration = 0;  ///< global iteration count at epoch end
  double lr = 0.0;            ///< rate of the last update in the epoch
  double loss = 0.0;          ///< mean training loss over the epoch
  std::optional<double> eval_map;
};

struct TrainResult {
  std::vector<Checkpoint> checkpoints;  ///< one per epoch
  std::vector<EpochLog> log;
  std::vector<EvalReport> eval_reports;              ///< per epoch, when an eval split is given
  std::vector<Matrix<double>> eval_predictions;      ///< per epoch probabilities on the eval split

  /// Mean eval mAP of the last k epochs.
  double headline_map(std::size_t k) const {
    std::vector<double> maps;
    for (const auto& r : eval_reports) maps.push_back(r.mAP);
    return mean_of_last(maps, k);
  }
};

class Adam {
 public:
  Adam(std::size_t n, AdamConfig config) : config_(config), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = config_.beta1 * m_[i] + (1 - config_.beta1) * grad[i];
      v_[i] = config_.beta2 * v_[i] + (1 - config_.beta2) * grad[i] * grad[i];
      params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config_.eps);
    }
  }

 private:
  AdamConfig config_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Builds the network input for one planned draw: optional mixup with the
/// partner, then time/frequency masking.
inline void materialize(const MultiLabelCorpus& corpus, const Draw& d, double mask_value, Matrix<double>& x,
                        std::vector<double>& y) {
  const auto& a = corpus[d.primary];
  const std::size_t C = corpus.num_classes();
  y.resize(C);
  auto& xv = x.values();
  if (d.is_mixup) {
    const auto& b = corpus[d.partner];
    const auto [wa, wb] = mix_weights(d.lambda);
    const auto& av = a.features.values();
    const auto& bv = b.features.values();
    for (std::size_t n = 0; n < xv.size(); ++n)
      xv[n] = wa * static_cast<double>(av[n]) + wb * static_cast<double>(bv[n]);
    for (std::size_t k = 0; k < C; ++k) y[k] = wa * a.labels[k] + wb * b.labels[k];
  } else {
    std::copy(a.features.values().begin(), a.features.values().end(), xv.begin());
    for (std::size_t k = 0; k < C; ++k) y[k] = a.labels[k];
  }
  apply_mask_inplace(x, d.mask, mask_value);
}

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch Adam training over pre-drawn epoch plans. Single-threaded and
/// fully determined by (corpus, configs, seed, init).
inline TrainResult train(const Model& model, const MultiLabelCorpus& corpus, const AugmentConfig& augment,
                         const TrainConfig& config, const MultiLabelCorpus* eval = nullptr,
                         std::optional<ParameterVector> init = std::nullopt, const EpochCallback& on_epoch = {}) {
  validate(config);
  validate(augment, corpus.shape());
  const auto& mc = model.config();
  if (mc.input != corpus.shape() || mc.num_classes != corpus.num_classes())
    throw Error(ErrorKind::shape_mismatch, "model configuration does not match the training corpus");
  if (eval && (eval->shape() != corpus.shape() || eval->num_classes() != corpus.num_classes()))
    throw Error(ErrorKind::shape_mismatch, "eval corpus does not match the training corpus");

  const auto sampler_seed = derive_seed(config.seed, "sampler");
  ParameterVector params = init ? std::move(*init) : init_parameters(mc, derive_seed(config.seed, "init"));
  model.check(params);
  const auto weights = make_weights(corpus);

  Adam adam(params.values.size(), config.adam);
  std::vector<double> grad(params.values.size());
  auto ws = model.make_workspace();
  Matrix<double> x(corpus.shape().frames, corpus.shape().bins);
  std::vector<double> y;

  TrainResult result;
  std::size_t iteration = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto plan = plan_epoch(weights, augment, corpus.shape(), epoch_seed(sampler_seed, epoch));
    double epoch_loss = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < plan.draws.size(); start += config.batch_size) {
      const std::size_t stop = std::min(plan.draws.size(), start + config.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t n = start; n < stop; ++n) {
        materialize(corpus, plan.draws[n], config.mask_value, x, y);
        batch_loss += model.loss_and_gradient(params.values, x, y, grad, ws);
      }
      if (!std::isfinite(batch_loss))
        throw Error(ErrorKind::numerical, "training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                              ", iteration " + std::to_string(iteration + 1));
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grad) g *= scale;
      ++iteration;
      lr = config.schedule.lr(iteration, epoch);
      adam.step(params.values, grad, lr);
      epoch_loss += batch_loss;
    }
    for (double v : params.values)
      if (!std::isfinite(v)) throw Error(ErrorKind::numerical, "training diverged: non-finite parameters");

    EpochLog log{epoch, iteration, lr, epoch_loss / static_cast<double>(plan.draws.size()), std::nullopt};
    result.checkpoints.push_back(Checkpoint{epoch, params});
    if (eval) {
      auto preds = predict(model, params, *eval);
      result.eval_reports.push_back(evaluate(preds, eval->labels()));
      result.eval_predictions.push_back(std::move(preds));
      log.eval_map = result.eval_reports.back().mAP;
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

inline void write_train_log(std::ostream& os, const std::vector<EpochLog>& log) {
  os << "epoch,iter,lr,loss,eval_map\n";
  for (const auto& e : log)
    os << e.epoch << ',' << e.iteration << ',' << text::format_real(e.lr) << ',' << text::format_real(e.loss) << ','
       << (e.eval_map ? text::format_real(*e.eval_map) : std::string()) << '\n';
}

}  // namespace psla
