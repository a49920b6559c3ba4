// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "psla/error.hpp"
#include "psla/matrix.hpp"
#include "psla/rng.hpp"
#include "psla/text.hpp"

namespace psla {

/// Multi-hot label vector, one byte per class.
using LabelSet = std::vector<std::uint8_t>;
using LabelMatrix = std::vector<LabelSet>;

struct FeatureShape {
  std::size_t frames = 1056;
  std::size_t bins = 128;

  std::size_t size() const noexcept { return frames * bins; }
  bool operator==(const FeatureShape&) const = default;
};

struct ClassTable {
  std::vector<std::string> names;
  std::vector<std::size_t> counts;

  std::size_t size() const noexcept { return names.size(); }

  std::optional<std::size_t> index_of(std::string_view name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }

  bool operator==(const ClassTable&) const = default;
};

/// One clip: a time x freq feature map (a 1-D signal is stored as len x 1)
/// and its multi-hot labels.
struct Sample {
  std::string id;
  Matrix<float> features;
  LabelSet labels;

  bool operator==(const Sample&) const = default;
};

inline std::size_t label_count(const LabelSet& y) {
  return static_cast<std::size_t>(std::count_if(y.begin(), y.end(), [](auto b) { return b != 0; }));
}

inline ClassTable count_classes(const LabelMatrix& labels, std::vector<std::string> names) {
  ClassTable table{std::move(names), {}};
  table.counts.assign(table.names.size(), 0);
  for (const auto& y : labels) {
    detail::require(y.size() == table.names.size(), "label vector length differs from class count");
    for (std::size_t k = 0; k < y.size(); ++k) table.counts[k] += y[k] ? 1 : 0;
  }
  return table;
}

class MultiLabelCorpus {
 public:
  MultiLabelCorpus() = default;

  /// Builds a corpus and recounts classes. Throws on any invariant breach.
  MultiLabelCorpus(std::vector<std::string> class_names, FeatureShape shape, std::vector<Sample> samples)
      : shape_(shape), samples_(std::move(samples)) {
    detail::require(!class_names.empty(), "corpus needs at least one class");
    detail::require(!samples_.empty(), "corpus needs at least one sample");
    for (const auto& s : samples_) {
      detail::require(s.labels.size() == class_names.size(), "sample " + s.id + " has wrong label length");
      detail::require(label_count(s.labels) >= 1, "sample " + s.id + " has no labels");
      if (s.features.rows() != shape_.frames || s.features.cols() != shape_.bins)
        throw Error(ErrorKind::shape_mismatch, "sample " + s.id + " does not match the corpus feature shape");
      for (float v : s.features.values())
        if (!std::isfinite(v)) throw Error(ErrorKind::numerical, "sample " + s.id + " has non-finite features");
    }
    classes_ = count_classes(labels(), std::move(class_names));
  }

  const FeatureShape& shape() const noexcept { return shape_; }
  const ClassTable& classes() const noexcept { return classes_; }
  std::size_t num_classes() const noexcept { return classes_.size(); }
  std::size_t size() const noexcept { return samples_.size(); }
  const std::vector<Sample>& samples() const noexcept { return samples_; }
  const Sample& operator[](std::size_t i) const { return samples_[i]; }

  LabelMatrix labels() const {
    LabelMatrix out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.labels);
    return out;
  }

  /// Same features, new labels (e.g. after label enhancement).
  MultiLabelCorpus with_labels(const LabelMatrix& labels) const {
    detail::require(labels.size() == samples_.size(), "label matrix row count differs from corpus size");
    auto samples = samples_;
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].labels = labels[i];
    return MultiLabelCorpus(classes_.names, shape_, std::move(samples));
  }

  bool operator==(const MultiLabelCorpus&) const = default;

 private:
  FeatureShape shape_;
  ClassTable classes_;
  std::vector<Sample> samples_;
};

inline ClassTable count_classes(const MultiLabelCorpus& corpus) {
  return count_classes(corpus.labels(), corpus.classes().names);
}

// ---------------------------------------------------------------------------
// Synthetic long-tailed corpora

struct SynthSpec {
  std::size_t num_classes = 10;
  std::size_t num_samples = 1000;
  double imbalance_ratio = 100.0;  ///< max class count / min class count
  double cooccurrence = 0.3;       ///< P(a non-head sample also carries the head label)
  std::uint64_t seed = 0;
  FeatureShape shape{32, 16};
  double planted_signal_strength = 1.0;
  /// Seeds the class patterns. Train and eval corpora that should describe
  /// the same sound classes share it while using different `seed`s.
  std::uint64_t pattern_seed = 0;
};

/// Exponent s of the rank-frequency law count_k ~ (k+1)^-s that makes the
/// head/tail ratio equal to imbalance_ratio.
inline double zipf_exponent(const SynthSpec& spec) {
  return std::log(spec.imbalance_ratio) / std::log(static_cast<double>(spec.num_classes));
}

/// Per-class frequency profile and event duration used to plant signal.
struct ClassPattern {
  std::vector<double> profile;  ///< length bins, peak 1
  std::size_t duration = 1;     ///< frames
};

inline std::vector<ClassPattern> make_class_patterns(std::size_t num_classes, FeatureShape shape,
                                                     std::uint64_t pattern_seed) {
  Rng rng = Rng(pattern_seed).split("patterns");
  std::vector<ClassPattern> out(num_classes);
  const double bins = static_cast<double>(shape.bins);
  for (auto& p : out) {
    const double c1 = rng.uniform() * bins;
    const double c2 = rng.uniform() * bins;
    const double w1 = 0.6 + 1.2 * rng.uniform();
    const double w2 = 0.6 + 1.2 * rng.uniform();
    p.profile.resize(shape.bins);
    double peak = 0.0;
    for (std::size_t f = 0; f < shape.bins; ++f) {
      const double x = static_cast<double>(f);
      p.profile[f] = std::exp(-(x - c1) * (x - c1) / (2 * w1 * w1)) +
                     0.7 * std::exp(-(x - c2) * (x - c2) / (2 * w2 * w2));
      peak = std::max(peak, p.profile[f]);
    }
    for (auto& v : p.profile) v /= peak;
    const double frac = 0.3 + 0.3 * rng.uniform();
    p.duration = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(frac * shape.frames)), 1,
                                         shape.frames);
  }
  return out;
}

inline std::vector<std::string> synthetic_class_names(std::size_t num_classes) {
  std::vector<std::string> names;
  const int width = num_classes > 100 ? 3 : 2;
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::string digits = std::to_string(k);
    names.push_back("class" + std::string(static_cast<std::size_t>(std::max<int>(0, width - (int)digits.size())), '0') +
                    digits);
  }
  return names;
}

inline void validate(const SynthSpec& spec) {
  if (spec.num_classes < 2) throw Error(ErrorKind::invalid_argument, "synthetic corpus needs num_classes >= 2");
  if (spec.num_samples < spec.num_classes)
    throw Error(ErrorKind::invalid_argument, "synthetic corpus needs num_samples >= num_classes");
  detail::require(spec.imbalance_ratio >= 1.0 && std::isfinite(spec.imbalance_ratio), "imbalance_ratio must be >= 1");
  detail::require(spec.cooccurrence >= 0.0 && spec.cooccurrence <= 1.0, "cooccurrence must lie in [0, 1]");
  detail::require(spec.planted_signal_strength >= 0.0, "planted_signal_strength must be >= 0");
  detail::require(spec.shape.frames >= 1 && spec.shape.bins >= 1, "feature shape must be nonempty");
}

/// Exact per-class label totals the generator realizes.
///
/// Every sample gets one primary label. Non-head primaries additionally carry
/// the head class (index 0) with the co-occurrence rate, which is clamped to
/// the largest value still compatible with the requested head/tail ratio.
/// Counts are fixed up front (not sampled) so the ratio and the rank-frequency
/// exponent hold at any corpus size.
struct SynthLabelPlan {
  std::vector<std::size_t> primary;  ///< primary-label count per class
  std::size_t head_cooccurrences = 0;
  double effective_cooccurrence = 0.0;
};

inline SynthLabelPlan plan_synthetic_labels(const SynthSpec& spec) {
  validate(spec);
  const std::size_t C = spec.num_classes;
  const double s = zipf_exponent(spec);
  double tail_mass = 0.0;
  for (std::size_t k = 1; k < C; ++k) tail_mass += std::pow(static_cast<double>(k + 1), -s);
  const double cooc = std::min(spec.cooccurrence, 1.0 / tail_mass);
  const double head_count = static_cast<double>(spec.num_samples) / (1.0 + tail_mass * (1.0 - cooc));

  SynthLabelPlan plan;
  plan.effective_cooccurrence = cooc;
  plan.primary.assign(C, 0);
  std::size_t tail_total = 0;
  for (std::size_t k = 1; k < C; ++k) {
    const double target = head_count * std::pow(static_cast<double>(k + 1), -s);
    plan.primary[k] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(target)));
    tail_total += plan.primary[k];
  }
  // Rounding can overshoot on tiny corpora; trim the largest tail classes.
  while (tail_total > spec.num_samples) {
    auto it = std::max_element(plan.primary.begin() + 1, plan.primary.end());
    if (*it <= 1) break;
    --*it;
    --tail_total;
  }
  plan.primary[0] = spec.num_samples - tail_total;
  plan.head_cooccurrences = std::min(tail_total, static_cast<std::size_t>(std::llround(cooc * tail_total)));
  if (plan.primary[0] + plan.head_cooccurrences == 0) plan.head_cooccurrences = 1;
  return plan;
}

inline MultiLabelCorpus generate_synthetic(const SynthSpec& spec) {
  const auto plan = plan_synthetic_labels(spec);
  const std::size_t N = spec.num_samples;
  const std::size_t C = spec.num_classes;
  Rng root(spec.seed);

  std::vector<std::size_t> primary;
  primary.reserve(N);
  for (std::size_t k = 0; k < C; ++k) primary.insert(primary.end(), plan.primary[k], k);
  Rng label_rng = root.split("labels");
  std::shuffle(primary.begin(), primary.end(), label_rng);

  LabelMatrix labels(N, LabelSet(C, 0));
  std::vector<std::size_t> tail_samples;
  for (std::size_t i = 0; i < N; ++i) {
    labels[i][primary[i]] = 1;
    if (primary[i] != 0) tail_samples.push_back(i);
  }
  std::shuffle(tail_samples.begin(), tail_samples.end(), label_rng);
  for (std::size_t n = 0; n < plan.head_cooccurrences; ++n) labels[tail_samples[n]][0] = 1;

  const auto patterns = make_class_patterns(C, spec.shape, spec.pattern_seed);
  const Rng feature_root = root.split("features");
  std::vector<Sample> samples(N);
  for (std::size_t i = 0; i < N; ++i) {
    Rng rng = feature_root.split(static_cast<std::uint64_t>(i));
    Matrix<float> x(spec.shape.frames, spec.shape.bins);
    std::vector<double> acc(spec.shape.size());
    for (auto& v : acc) v = rng.normal();
    for (std::size_t k = 0; k < C; ++k) {
      if (!labels[i][k]) continue;
      const auto& p = patterns[k];
      const auto onset = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(spec.shape.frames - p.duration)));
      for (std::size_t t = onset; t < onset + p.duration; ++t)
        for (std::size_t f = 0; f < spec.shape.bins; ++f)
          acc[t * spec.shape.bins + f] += spec.planted_signal_strength * p.profile[f];
    }
    std::transform(acc.begin(), acc.end(), x.values().begin(), [](double v) { return static_cast<float>(v); });
    char id[32];
    std::snprintf(id, sizeof(id), "s%06zu", i);
    samples[i] = Sample{id, std::move(x), std::move(labels[i])};
  }
  return MultiLabelCorpus(synthetic_class_names(C), spec.shape, std::move(samples));
}

// ---------------------------------------------------------------------------
// On-disk format
//
//   <dir>/manifest.txt        psla-corpus v1 / feature_shape / num_classes /
//                             num_samples / one `class <name>` line per class
//   <dir>/labels.txt          <id>\t<class>\t<class>...   (one line per sample)
//   <dir>/features/<id>.f32   "PSF1", u32 frames, u32 bins, then frames*bins
//                             little-endian float32, row-major time x freq
//
// Payloads with fewer frames than declared are zero-padded on load.

namespace detail {

inline void check_token(std::string_view s, std::string_view what) {
  if (s.empty() || s.find_first_of("\t\n\r") != std::string_view::npos)
    throw Error(ErrorKind::invalid_argument, std::string(what) + " must be nonempty and free of tabs/newlines");
}

inline void check_id(std::string_view id) {
  const bool ok = !id.empty() && std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.';
  });
  if (!ok || id == "." || id == "..") throw Error(ErrorKind::invalid_argument, "sample id '" + std::string(id) + "' is not file-name safe");
}

template <class T>
void put_le(std::ostream& os, T v) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(bytes.data(), bytes.size());
}

template <class T>
T get_le(const char* p) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T v;
  std::memcpy(&v, bytes.data(), sizeof(T));
  return v;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Lets a temporary stream feed a writer that takes `std::ostream&`.
template <class Stream>
Stream& lvalue(Stream&& s) {
  return s;
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  return out;
}

}  // namespace detail

inline void write_label_file(const std::filesystem::path& path, const std::vector<std::string>& ids,
                             const LabelMatrix& labels, const std::vector<std::string>& class_names) {
  detail::require(ids.size() == labels.size(), "id and label counts differ");
  auto out = detail::open_out(path);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i];
    for (std::size_t k = 0; k < labels[i].size(); ++k)
      if (labels[i][k]) out << '\t' << class_names.at(k);
    out << '\n';
  }
}

/// Reads `<id>\t<class>...` lines against a known class list.
inline std::vector<std::pair<std::string, LabelSet>> read_label_file(const std::filesystem::path& path,
                                                                     const std::vector<std::string>& class_names) {
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t k = 0; k < class_names.size(); ++k) index.emplace(class_names[k], k);
  const std::string content = detail::read_file(path);
  std::vector<std::pair<std::string, LabelSet>> out;
  std::size_t line_no = 0;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (text::trim(line).empty()) continue;
    const auto fields = text::split(line, '\t');
    LabelSet y(class_names.size(), 0);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      const auto it = index.find(fields[j]);
      if (it == index.end())
        throw Error(ErrorKind::unknown_class, path.string() + ":" + std::to_string(line_no) + ": unknown class '" +
                                                  std::string(fields[j]) + "'");
      y[it->second] = 1;
    }
    if (label_count(y) == 0)
      throw Error(ErrorKind::malformed_manifest,
                  path.string() + ":" + std::to_string(line_no) + ": sample has no labels");
    out.emplace_back(std::string(fields[0]), std::move(y));
  }
  return out;
}

inline void write_corpus(const MultiLabelCorpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "features");
  {
    auto out = detail::open_out(dir / "manifest.txt");
    out << "psla-corpus v1\n";
    out << "feature_shape " << corpus.shape().frames << ' ' << corpus.shape().bins << '\n';
    out << "num_classes " << corpus.num_classes() << '\n';
    out << "num_samples " << corpus.size() << '\n';
    for (const auto& name : corpus.classes().names) {
      detail::check_token(name, "class name");
      out << "class " << name << '\n';
    }
  }
  std::vector<std::string> ids;
  for (const auto& s : corpus.samples()) {
    detail::check_id(s.id);
    ids.push_back(s.id);
    auto out = detail::open_out(dir / "features" / (s.id + ".f32"), std::ios::out | std::ios::binary);
    out.write("PSF1", 4);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.features.rows()));
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.features.cols()));
    for (float v : s.features.values()) detail::put_le<float>(out, v);
    if (!out) throw Error(ErrorKind::io, "short write for sample " + s.id);
  }
  write_label_file(dir / "labels.txt", ids, corpus.labels(), corpus.classes().names);
}

struct CorpusManifest {
  FeatureShape shape;
  std::size_t num_samples = 0;
  std::vector<std::string> class_names;
};

inline CorpusManifest read_corpus_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.txt";
  const std::string content = detail::read_file(path);
  auto bad = [&](std::size_t line, const std::string& msg) {
    return Error(ErrorKind::malformed_manifest, path.string() + ":" + std::to_string(line) + ": " + msg);
  };
  CorpusManifest m;
  std::optional<std::size_t> declared_classes, declared_samples;
  bool have_shape = false, have_magic = false;
  std::size_t line_no = 0;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (text::trim(line).empty()) continue;
    const auto sp = line.find(' ');
    const auto key = line.substr(0, sp);
    const auto rest = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
    if (!have_magic) {
      if (line != "psla-corpus v1") throw bad(line_no, "expected header 'psla-corpus v1'");
      have_magic = true;
    } else if (key == "feature_shape") {
      const auto parts = text::split_ws(rest);
      const auto fr = parts.size() == 2 ? text::parse_int<std::size_t>(parts[0]) : std::nullopt;
      const auto bi = parts.size() == 2 ? text::parse_int<std::size_t>(parts[1]) : std::nullopt;
      if (!fr || !bi || *fr == 0 || *bi == 0) throw bad(line_no, "feature_shape needs two positive integers");
      m.shape = {*fr, *bi};
      have_shape = true;
    } else if (key == "num_classes") {
      declared_classes = text::parse_int<std::size_t>(text::trim(rest));
      if (!declared_classes) throw bad(line_no, "num_classes is not an integer");
    } else if (key == "num_samples") {
      declared_samples = text::parse_int<std::size_t>(text::trim(rest));
      if (!declared_samples) throw bad(line_no, "num_samples is not an integer");
    } else if (key == "class") {
      if (rest.empty()) throw bad(line_no, "empty class name");
      if (std::find(m.class_names.begin(), m.class_names.end(), rest) != m.class_names.end())
        throw bad(line_no, "duplicate class '" + std::string(rest) + "'");
      m.class_names.emplace_back(rest);
    } else {
      throw bad(line_no, "unknown key '" + std::string(key) + "'");
    }
  }
  if (!have_magic || !have_shape || !declared_classes || !declared_samples)
    throw bad(line_no, "manifest is missing required fields");
  if (*declared_classes != m.class_names.size() || m.class_names.empty())
    throw bad(line_no, "num_classes does not match the class list");
  m.num_samples = *declared_samples;
  return m;
}

inline Matrix<float> read_feature_payload(const std::filesystem::path& path, FeatureShape shape) {
  const std::string bytes = detail::read_file(path);
  if (bytes.size() < 12 || bytes.compare(0, 4, "PSF1") != 0)
    throw Error(ErrorKind::shape_mismatch, path.string() + ": missing payload header");
  const auto frames = detail::get_le<std::uint32_t>(bytes.data() + 4);
  const auto bins = detail::get_le<std::uint32_t>(bytes.data() + 8);
  if (bins != shape.bins || frames > shape.frames || frames == 0)
    throw Error(ErrorKind::shape_mismatch, path.string() + ": payload is " + std::to_string(frames) + "x" +
                                               std::to_string(bins) + ", corpus declares " +
                                               std::to_string(shape.frames) + "x" + std::to_string(shape.bins));
  const std::size_t count = static_cast<std::size_t>(frames) * bins;
  if (bytes.size() != 12 + 4 * count)
    throw Error(ErrorKind::shape_mismatch, path.string() + ": payload size disagrees with its header");
  Matrix<float> x(shape.frames, shape.bins, 0.0f);
  for (std::size_t n = 0; n < count; ++n) x.values()[n] = detail::get_le<float>(bytes.data() + 12 + 4 * n);
  return x;
}

inline MultiLabelCorpus read_corpus(const std::filesystem::path& dir) {
  const auto manifest = read_corpus_manifest(dir);
  const auto rows = read_label_file(dir / "labels.txt", manifest.class_names);
  if (rows.size() != manifest.num_samples)
    throw Error(ErrorKind::malformed_manifest, "labels.txt lists " + std::to_string(rows.size()) +
                                                   " samples but the manifest declares " +
                                                   std::to_string(manifest.num_samples));
  std::vector<Sample> samples;
  samples.reserve(rows.size());
  for (const auto& [id, y] : rows) {
    detail::check_id(id);
    samples.push_back(Sample{id, read_feature_payload(dir / "features" / (id + ".f32"), manifest.shape), y});
  }
  return MultiLabelCorpus(manifest.class_names, manifest.shape, std::move(samples));
}

}  // namespace psla
