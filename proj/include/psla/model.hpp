// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "psla/corpus.hpp"
#include "psla/error.hpp"
#include "psla/matrix.hpp"
#include "psla/rng.hpp"
#include "psla/text.hpp"

namespace psla {

enum class ModelKind { attention, linear };

inline std::string_view to_string(ModelKind k) { return k == ModelKind::attention ? "attention" : "linear"; }

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "attention") return ModelKind::attention;
  if (s == "linear") return ModelKind::linear;
  throw Error(ErrorKind::invalid_argument, "unknown model kind '" + std::string(s) + "'");
}

/// Desk-scale tagger. The attention variant is two strided tanh stages
/// (time stride s1 then s2) followed by H attention-pooling heads; the
/// linear variant is a single affine map per frame with mean pooling.
struct ModelConfig {
  ModelKind kind = ModelKind::attention;
  FeatureShape input{1056, 128};
  std::size_t num_classes = 527;
  std::size_t stride1 = 8;
  std::size_t stride2 = 4;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 64;
  std::size_t num_heads = 4;

  std::size_t frames1() const { return input.frames / stride1; }
  std::size_t frames2() const { return frames1() / stride2; }

  bool operator==(const ModelConfig&) const = default;
};

inline void validate(const ModelConfig& c) {
  detail::require(c.num_classes >= 1, "model needs at least one class");
  detail::require(c.input.frames >= 1 && c.input.bins >= 1, "model input shape must be nonempty");
  if (c.kind == ModelKind::linear) return;
  detail::require(c.stride1 >= 1 && c.stride2 >= 1, "encoder strides must be >= 1");
  detail::require(c.frames2() >= 1, "encoder strides leave no output frames");
  detail::require(c.hidden_dim >= 1 && c.embed_dim >= 1, "encoder widths must be >= 1");
  detail::require(c.num_heads >= 1, "attention needs at least one head");
}

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;

  std::size_t size() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }
  bool operator==(const TensorSpec&) const = default;
};

/// Flat parameters plus the (name, shape) manifest that partitions them.
struct ParameterVector {
  std::vector<double> values;
  std::vector<TensorSpec> manifest;

  std::size_t offset_of(std::string_view name) const {
    std::size_t off = 0;
    for (const auto& t : manifest) {
      if (t.name == name) return off;
      off += t.size();
    }
    throw Error(ErrorKind::invalid_argument, "no tensor named " + std::string(name));
  }

  std::span<double> tensor(std::string_view name) {
    const auto off = offset_of(name);
    return {values.data() + off, spec(name).size()};
  }
  std::span<const double> tensor(std::string_view name) const {
    const auto off = offset_of(name);
    return {values.data() + off, spec(name).size()};
  }

  const TensorSpec& spec(std::string_view name) const {
    for (const auto& t : manifest)
      if (t.name == name) return t;
    throw Error(ErrorKind::invalid_argument, "no tensor named " + std::string(name));
  }

  bool has(std::string_view name) const {
    return std::any_of(manifest.begin(), manifest.end(), [&](const auto& t) { return t.name == name; });
  }

  bool operator==(const ParameterVector&) const = default;
};

inline std::vector<TensorSpec> parameter_manifest(const ModelConfig& c) {
  validate(c);
  const std::size_t C = c.num_classes;
  if (c.kind == ModelKind::linear) return {{"linear.weight", {C, c.input.bins}}, {"linear.bias", {C}}};
  std::vector<TensorSpec> m{
      {"encoder1.weight", {c.hidden_dim, c.stride1 * c.input.bins}},
      {"encoder1.bias", {c.hidden_dim}},
      {"encoder2.weight", {c.embed_dim, c.stride2 * c.hidden_dim}},
      {"encoder2.bias", {c.embed_dim}},
  };
  for (std::size_t h = 0; h < c.num_heads; ++h) {
    const auto p = "head" + std::to_string(h);
    m.push_back({p + ".attention.weight", {C, c.embed_dim}});
    m.push_back({p + ".attention.bias", {C}});
    m.push_back({p + ".classifier.weight", {C, c.embed_dim}});
    m.push_back({p + ".classifier.bias", {C}});
  }
  m.push_back({"head_gates", {c.num_heads}});
  return m;
}

/// Glorot-uniform weights, zero biases and gates.
inline void init_tensor(const TensorSpec& spec, std::span<double> out, Rng& rng) {
  if (spec.shape.size() < 2) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  const double fan_out = static_cast<double>(spec.shape[0]);
  const double fan_in = static_cast<double>(spec.size()) / fan_out;
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : out) v = a * (2.0 * rng.uniform() - 1.0);
}

inline ParameterVector init_parameters(const ModelConfig& c, std::uint64_t seed) {
  ParameterVector p;
  p.manifest = parameter_manifest(c);
  std::size_t total = 0;
  for (const auto& t : p.manifest) total += t.size();
  p.values.resize(total);
  std::size_t off = 0;
  for (const auto& t : p.manifest) {
    Rng rng = Rng(seed).split(t.name);  // per-tensor streams keep partial re-inits reproducible
    init_tensor(t, {p.values.data() + off, t.size()}, rng);
    off += t.size();
  }
  return p;
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Binary cross-entropy on probabilities, mean over classes; probabilities
/// are clamped to [eps, 1 - eps].
inline double bce_loss(std::span<const double> probs, std::span<const double> targets, double eps = 1e-7) {
  detail::require(probs.size() == targets.size() && !probs.empty(), "loss inputs differ in length");
  double sum = 0.0;
  for (std::size_t c = 0; c < probs.size(); ++c) {
    const double p = std::clamp(probs[c], eps, 1.0 - eps);
    sum -= targets[c] * std::log(p) + (1.0 - targets[c]) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(probs.size());
}

/// The same loss evaluated from logits, stable for large |logit|. This is
/// the training objective.
inline double bce_with_logits(std::span<const double> logits, std::span<const double> targets) {
  double sum = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    const double o = logits[c];
    sum += std::max(o, 0.0) - o * targets[c] + std::log1p(std::exp(-std::abs(o)));
  }
  return sum / static_cast<double>(logits.size());
}

struct ForwardResult {
  std::vector<double> logits;
  std::vector<double> probs;
  std::vector<Matrix<double>> attention;  ///< per head, frames2 x classes; empty for linear
};

class Model {
 public:
  /// Scratch buffers for one forward/backward pass.
  struct Workspace {
    std::vector<double> h1, z, att, cls, norm, pooled, out;
    std::vector<double> dz, dh1, da, dl, dpool;
    std::vector<double> mean;
    std::vector<double> gate;  // softmax(head_gates)
  };

  explicit Model(ModelConfig config) : config_(config), manifest_(parameter_manifest(config)) {
    for (const auto& t : manifest_) {
      offsets_.push_back(total_);
      total_ += t.size();
    }
  }

  const ModelConfig& config() const noexcept { return config_; }
  const std::vector<TensorSpec>& manifest() const noexcept { return manifest_; }
  std::size_t num_parameters() const noexcept { return total_; }

  void check(const ParameterVector& p) const {
    if (p.manifest != manifest_ || p.values.size() != total_)
      throw Error(ErrorKind::manifest_mismatch, "parameters do not match the model configuration");
  }

  Workspace make_workspace() const {
    const auto& c = config_;
    const std::size_t C = c.num_classes, H = c.num_heads, T2 = c.frames2();
    Workspace ws;
    ws.out.resize(C);
    ws.dpool.resize(C);
    ws.mean.resize(c.input.bins);
    if (c.kind == ModelKind::attention) {
      ws.h1.resize(c.frames1() * c.hidden_dim);
      ws.z.resize(T2 * c.embed_dim);
      ws.att.resize(H * T2 * C);
      ws.cls.resize(H * T2 * C);
      ws.norm.resize(H * C);
      ws.pooled.resize(H * C);
      ws.dz.resize(ws.z.size());
      ws.dh1.resize(ws.h1.size());
      ws.da.resize(C);
      ws.dl.resize(C);
      ws.dpool.resize(C);
      ws.gate.resize(H);
    }
    return ws;
  }

  /// Pre-sigmoid class logits; fills ws with intermediate activations.
  void logits_into(std::span<const double> p, const Matrix<double>& x, Workspace& ws) const {
    if (x.rows() != config_.input.frames || x.cols() != config_.input.bins)
      throw Error(ErrorKind::shape_mismatch, "input feature map does not match the model input shape");
    if (config_.kind == ModelKind::linear)
      linear_forward(p, x, ws);
    else
      attention_forward(p, x, ws);
  }

  ForwardResult forward(const ParameterVector& params, const Matrix<double>& x) const {
    check(params);
    auto ws = make_workspace();
    logits_into(params.values, x, ws);
    ForwardResult r;
    r.logits = ws.out;
    for (double o : r.logits) {
      if (!std::isfinite(o)) throw Error(ErrorKind::numerical, "non-finite activation in forward pass");
      r.probs.push_back(sigmoid(o));
    }
    if (config_.kind == ModelKind::attention) {
      const std::size_t C = config_.num_classes, T2 = config_.frames2();
      for (std::size_t h = 0; h < config_.num_heads; ++h) {
        Matrix<double> w(T2, C);
        for (std::size_t v = 0; v < T2; ++v)
          for (std::size_t c = 0; c < C; ++c) w(v, c) = ws.att[(h * T2 + v) * C + c] / ws.norm[h * C + c];
        r.attention.push_back(std::move(w));
      }
    }
    return r;
  }

  double loss(std::span<const double> p, const Matrix<double>& x, std::span<const double> y, Workspace& ws) const {
    logits_into(p, x, ws);
    return bce_with_logits(ws.out, y);
  }

  /// Adds d(loss)/d(params) for one sample into grad and returns the loss.
  double loss_and_gradient(std::span<const double> p, const Matrix<double>& x, std::span<const double> y,
                           std::span<double> grad, Workspace& ws) const {
    detail::require(y.size() == config_.num_classes, "target length differs from class count");
    logits_into(p, x, ws);
    const double value = bce_with_logits(ws.out, y);
    const double inv_c = 1.0 / static_cast<double>(config_.num_classes);
    // d loss / d logit = (sigmoid(o) - y) / C
    for (std::size_t c = 0; c < config_.num_classes; ++c) ws.dpool[c] = (sigmoid(ws.out[c]) - y[c]) * inv_c;
    if (config_.kind == ModelKind::linear)
      linear_backward(ws, grad);
    else
      attention_backward(p, x, ws, grad);
    return value;
  }

 private:
  static double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
  }

  void linear_forward(std::span<const double> p, const Matrix<double>& x, Workspace& ws) const {
    const std::size_t F = config_.input.bins, T = config_.input.frames, C = config_.num_classes;
    std::fill(ws.mean.begin(), ws.mean.end(), 0.0);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t f = 0; f < F; ++f) ws.mean[f] += x(t, f);
    for (auto& m : ws.mean) m /= static_cast<double>(T);
    const double* W = p.data() + offsets_[0];
    const double* b = p.data() + offsets_[1];
    for (std::size_t c = 0; c < C; ++c) ws.out[c] = b[c] + dot(W + c * F, ws.mean.data(), F);
  }

  void linear_backward(Workspace& ws, std::span<double> grad) const {
    const std::size_t F = config_.input.bins, C = config_.num_classes;
    double* dW = grad.data() + offsets_[0];
    double* db = grad.data() + offsets_[1];
    for (std::size_t c = 0; c < C; ++c) {
      db[c] += ws.dpool[c];
      for (std::size_t f = 0; f < F; ++f) dW[c * F + f] += ws.dpool[c] * ws.mean[f];
    }
  }

  // Tensor offsets for the attention layout (see parameter_manifest).
  std::size_t head_offset(std::size_t h, std::size_t j) const { return offsets_[4 + 4 * h + j]; }
  std::size_t gates_offset() const { return offsets_.back(); }

  void attention_forward(std::span<const double> p, const Matrix<double>& x, Workspace& ws) const {
    const auto& c = config_;
    const std::size_t F = c.input.bins, C = c.num_classes, H = c.num_heads;
    const std::size_t T1 = c.frames1(), T2 = c.frames2(), D1 = c.hidden_dim, D = c.embed_dim;
    const std::size_t in1 = c.stride1 * F, in2 = c.stride2 * D1;
    const double* W1 = p.data() + offsets_[0];
    const double* b1 = p.data() + offsets_[1];
    const double* W2 = p.data() + offsets_[2];
    const double* b2 = p.data() + offsets_[3];
    const double* xs = x.values().data();

    for (std::size_t u = 0; u < T1; ++u) {
      const double* in = xs + u * in1;
      for (std::size_t o = 0; o < D1; ++o) ws.h1[u * D1 + o] = std::tanh(b1[o] + dot(W1 + o * in1, in, in1));
    }
    for (std::size_t v = 0; v < T2; ++v) {
      const double* in = ws.h1.data() + v * in2;
      for (std::size_t o = 0; o < D; ++o) ws.z[v * D + o] = std::tanh(b2[o] + dot(W2 + o * in2, in, in2));
    }
    for (std::size_t h = 0; h < H; ++h) {
      const double* Wa = p.data() + head_offset(h, 0);
      const double* ba = p.data() + head_offset(h, 1);
      const double* Wc = p.data() + head_offset(h, 2);
      const double* bc = p.data() + head_offset(h, 3);
      double* att = ws.att.data() + h * T2 * C;
      double* cls = ws.cls.data() + h * T2 * C;
      double* norm = ws.norm.data() + h * C;
      double* pooled = ws.pooled.data() + h * C;
      std::fill(norm, norm + C, 0.0);
      std::fill(pooled, pooled + C, 0.0);
      for (std::size_t v = 0; v < T2; ++v) {
        const double* zv = ws.z.data() + v * D;
        for (std::size_t k = 0; k < C; ++k) {
          const double s = sigmoid(ba[k] + dot(Wa + k * D, zv, D));
          const double l = bc[k] + dot(Wc + k * D, zv, D);
          att[v * C + k] = s;
          cls[v * C + k] = l;
          norm[k] += s;
          pooled[k] += s * l;
        }
      }
      // attention normalized over time: weighted sum == weighted mean
      for (std::size_t k = 0; k < C; ++k) pooled[k] /= norm[k];
    }
    const double* g = p.data() + gates_offset();
    const double gmax = *std::max_element(g, g + H);
    double gsum = 0.0;
    for (std::size_t h = 0; h < H; ++h) gsum += ws.gate[h] = std::exp(g[h] - gmax);
    for (auto& v : ws.gate) v /= gsum;
    for (std::size_t k = 0; k < C; ++k) {
      double o = 0.0;
      for (std::size_t h = 0; h < H; ++h) o += ws.gate[h] * ws.pooled[h * C + k];
      ws.out[k] = o;
    }
  }

  void attention_backward(std::span<const double> p, const Matrix<double>& x, Workspace& ws,
                          std::span<double> grad) const {
    const auto& c = config_;
    const std::size_t F = c.input.bins, C = c.num_classes, H = c.num_heads;
    const std::size_t T1 = c.frames1(), T2 = c.frames2(), D1 = c.hidden_dim, D = c.embed_dim;
    const std::size_t in1 = c.stride1 * F, in2 = c.stride2 * D1;
    const double* xs = x.values().data();
    const std::span<const double> delta = ws.dpool;  // dL/d out

    double* dg = grad.data() + gates_offset();
    for (std::size_t h = 0; h < H; ++h) {
      double s = 0.0;
      for (std::size_t k = 0; k < C; ++k) s += delta[k] * (ws.pooled[h * C + k] - ws.out[k]);
      dg[h] += ws.gate[h] * s;
    }

    std::fill(ws.dz.begin(), ws.dz.end(), 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      const double* Wa = p.data() + head_offset(h, 0);
      const double* Wc = p.data() + head_offset(h, 2);
      double* dWa = grad.data() + head_offset(h, 0);
      double* dba = grad.data() + head_offset(h, 1);
      double* dWc = grad.data() + head_offset(h, 2);
      double* dbc = grad.data() + head_offset(h, 3);
      const double* att = ws.att.data() + h * T2 * C;
      const double* cls = ws.cls.data() + h * T2 * C;
      const double* norm = ws.norm.data() + h * C;
      const double* pooled = ws.pooled.data() + h * C;
      for (std::size_t v = 0; v < T2; ++v) {
        const double* zv = ws.z.data() + v * D;
        double* dzv = ws.dz.data() + v * D;
        for (std::size_t k = 0; k < C; ++k) {
          const double G = ws.gate[h] * delta[k];
          const double s = att[v * C + k];
          const double da = G * (cls[v * C + k] - pooled[k]) / norm[k] * s * (1.0 - s);
          const double dl = G * s / norm[k];
          dba[k] += da;
          dbc[k] += dl;
          double* dwa = dWa + k * D;
          double* dwc = dWc + k * D;
          const double* wa = Wa + k * D;
          const double* wc = Wc + k * D;
          for (std::size_t o = 0; o < D; ++o) {
            dwa[o] += da * zv[o];
            dwc[o] += dl * zv[o];
            dzv[o] += da * wa[o] + dl * wc[o];
          }
        }
      }
    }

    const double* W2 = p.data() + offsets_[2];
    double* dW1 = grad.data() + offsets_[0];
    double* db1 = grad.data() + offsets_[1];
    double* dW2 = grad.data() + offsets_[2];
    double* db2 = grad.data() + offsets_[3];
    std::fill(ws.dh1.begin(), ws.dh1.end(), 0.0);
    for (std::size_t v = 0; v < T2; ++v) {
      const double* in = ws.h1.data() + v * in2;
      double* din = ws.dh1.data() + v * in2;
      for (std::size_t o = 0; o < D; ++o) {
        const double zo = ws.z[v * D + o];
        const double du = ws.dz[v * D + o] * (1.0 - zo * zo);
        if (du == 0.0) continue;
        db2[o] += du;
        double* dw = dW2 + o * in2;
        const double* w = W2 + o * in2;
        for (std::size_t i = 0; i < in2; ++i) {
          dw[i] += du * in[i];
          din[i] += du * w[i];
        }
      }
    }
    for (std::size_t u = 0; u < T1; ++u) {
      const double* in = xs + u * in1;
      for (std::size_t o = 0; o < D1; ++o) {
        const double ho = ws.h1[u * D1 + o];
        const double du = ws.dh1[u * D1 + o] * (1.0 - ho * ho);
        if (du == 0.0) continue;
        db1[o] += du;
        double* dw = dW1 + o * in1;
        for (std::size_t i = 0; i < in1; ++i) dw[i] += du * in[i];
      }
    }
  }

  ModelConfig config_;
  std::vector<TensorSpec> manifest_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

/// Probabilities (or logits) for every sample of a corpus, N x C.
inline Matrix<double> predict(const Model& model, const ParameterVector& params, const MultiLabelCorpus& corpus,
                              bool logits = false) {
  model.check(params);
  Matrix<double> out(corpus.size(), model.config().num_classes);
  auto ws = model.make_workspace();
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto x = corpus[i].features.cast<double>();
    model.logits_into(params.values, x, ws);
    for (std::size_t c = 0; c < out.cols(); ++c) {
      const double o = ws.out[c];
      if (!std::isfinite(o)) throw Error(ErrorKind::numerical, "non-finite logit for sample " + corpus[i].id);
      out(i, c) = logits ? o : sigmoid(o);
    }
  }
  return out;
}

/// Max relative error between the analytic gradient and central finite
/// differences. Relative error uses max(|a|, |n|, floor) as denominator so
/// coordinates with vanishing gradient are compared absolutely.
inline double grad_check(const Model& model, const ParameterVector& params, const Matrix<double>& x,
                         std::span<const double> y, double step = 1e-5, double floor = 1e-3) {
  model.check(params);
  auto ws = model.make_workspace();
  std::vector<double> analytic(params.values.size(), 0.0);
  model.loss_and_gradient(params.values, x, y, analytic, ws);
  std::vector<double> p = params.values;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double up = model.loss(p, x, y, ws);
    p[i] = orig - step;
    const double down = model.loss(p, x, y, ws);
    p[i] = orig;
    const double numeric = (up - down) / (2 * step);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints: text manifest header, then float64 little-endian payload.
//
//   psla-checkpoint v1
//   epoch <e>
//   tensor <name> <dim>...
//   end

struct Checkpoint {
  std::size_t epoch = 0;
  ParameterVector params;

  bool operator==(const Checkpoint&) const = default;
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  auto out = detail::open_out(path, std::ios::out | std::ios::binary);
  out << "psla-checkpoint v1\nepoch " << ckpt.epoch << '\n';
  for (const auto& t : ckpt.params.manifest) {
    detail::check_token(t.name, "tensor name");
    if (t.name.find(' ') != std::string::npos) throw Error(ErrorKind::invalid_argument, "tensor names cannot contain spaces");
    out << "tensor " << t.name;
    for (auto d : t.shape) out << ' ' << d;
    out << '\n';
  }
  out << "end\n";
  for (double v : ckpt.params.values) detail::put_le<double>(out, v);
  if (!out) throw Error(ErrorKind::io, "short write to " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = detail::read_file(path);
  auto bad = [&](const std::string& msg) { return Error(ErrorKind::malformed_manifest, path.string() + ": " + msg); };
  Checkpoint ckpt;
  std::size_t pos = 0;
  bool header = false, done = false;
  while (!done) {
    const auto nl = bytes.find('\n', pos);
    if (nl == std::string::npos) throw bad("truncated header");
    const std::string_view line(bytes.data() + pos, nl - pos);
    pos = nl + 1;
    const auto f = text::split_ws(line);
    if (!header) {
      if (line != "psla-checkpoint v1") throw bad("not a checkpoint file");
      header = true;
    } else if (f.size() == 2 && f[0] == "epoch") {
      const auto e = text::parse_int<std::size_t>(f[1]);
      if (!e) throw bad("bad epoch");
      ckpt.epoch = *e;
    } else if (f.size() >= 2 && f[0] == "tensor") {
      TensorSpec t{std::string(f[1]), {}};
      for (std::size_t j = 2; j < f.size(); ++j) {
        const auto d = text::parse_int<std::size_t>(f[j]);
        if (!d) throw bad("bad tensor dimension");
        t.shape.push_back(*d);
      }
      ckpt.params.manifest.push_back(std::move(t));
    } else if (line == "end") {
      done = true;
    } else {
      throw bad("unexpected header line '" + std::string(line) + "'");
    }
  }
  std::size_t total = 0;
  for (const auto& t : ckpt.params.manifest) total += t.size();
  if (bytes.size() - pos != total * 8) throw bad("payload size disagrees with the manifest");
  ckpt.params.values.resize(total);
  for (std::size_t i = 0; i < total; ++i) ckpt.params.values[i] = detail::get_le<double>(bytes.data() + pos + 8 * i);
  return ckpt;
}

struct ExternalInit {
  ParameterVector params;
  std::vector<std::string> loaded;
  std::vector<std::string> reinitialized;  ///< missing from the file or shape-mismatched
  std::vector<std::string> ignored;        ///< present in the file but unused by the model
};

/// Starts a model from externally produced parameters. Tensors whose name and
/// shape match are copied; the rest (typically the first layer when the
/// input layout changed and the classifier when the label set changed) are
/// freshly initialized from `seed`.
inline ExternalInit load_external_init(const std::filesystem::path& path, const ModelConfig& config,
                                       std::uint64_t seed) {
  const auto source = load_checkpoint(path).params;
  ExternalInit result;
  result.params = init_parameters(config, seed);
  for (const auto& t : result.params.manifest) {
    if (source.has(t.name) && source.spec(t.name).shape == t.shape) {
      const auto from = source.tensor(t.name);
      std::copy(from.begin(), from.end(), result.params.tensor(t.name).begin());
      result.loaded.push_back(t.name);
    } else {
      result.reinitialized.push_back(t.name);
    }
  }
  for (const auto& t : source.manifest)
    if (!result.params.has(t.name)) result.ignored.push_back(t.name);
  const bool any_name_overlap = std::any_of(source.manifest.begin(), source.manifest.end(),
                                            [&](const auto& t) { return result.params.has(t.name); });
  if (!any_name_overlap)
    throw Error(ErrorKind::incompatible_init, path.string() + " shares no tensors with the model");
  return result;
}

}  // namespace psla
