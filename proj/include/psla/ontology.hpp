// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "psla/corpus.hpp"
#include "psla/error.hpp"
#include "psla/text.hpp"

namespace psla {

using ClassId = std::size_t;

/// Parent -> child class relations. Edges are stored in both directions so
/// one-hop queries are O(degree).
class Ontology {
 public:
  Ontology() = default;
  explicit Ontology(std::size_t num_classes) : children_(num_classes), parents_(num_classes) {}

  std::size_t num_classes() const noexcept { return children_.size(); }

  void add_edge(ClassId parent, ClassId child) {
    check(parent);
    check(child);
    auto& ch = children_[parent];
    if (std::find(ch.begin(), ch.end(), child) != ch.end()) return;
    ch.push_back(child);
    parents_[child].push_back(parent);
  }

  const std::vector<ClassId>& children(ClassId k) const { return children_.at(check(k)); }
  const std::vector<ClassId>& parents(ClassId k) const { return parents_.at(check(k)); }

  std::size_t num_edges() const {
    std::size_t n = 0;
    for (const auto& c : children_) n += c.size();
    return n;
  }

 private:
  ClassId check(ClassId k) const {
    if (k >= children_.size())
      throw Error(ErrorKind::invalid_argument, "class id " + std::to_string(k) + " out of range");
    return k;
  }

  std::vector<std::vector<ClassId>> children_;
  std::vector<std::vector<ClassId>> parents_;
};

/// Direct parents and direct children of k, sorted and deduplicated.
inline std::vector<ClassId> neighbors(const Ontology& onto, ClassId k) {
  std::vector<ClassId> out = onto.parents(k);
  const auto& ch = onto.children(k);
  out.insert(out.end(), ch.begin(), ch.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Returns one directed cycle (in edge order) if the graph has any.
inline std::optional<std::vector<ClassId>> find_cycle(const Ontology& onto) {
  enum : char { white, grey, black };
  const std::size_t n = onto.num_classes();
  std::vector<char> color(n, white);
  std::vector<std::pair<ClassId, std::size_t>> stack;  // node, next child slot
  for (ClassId root = 0; root < n; ++root) {
    if (color[root] != white) continue;
    stack.emplace_back(root, 0);
    color[root] = grey;
    while (!stack.empty()) {
      auto& [node, slot] = stack.back();
      const auto& ch = onto.children(node);
      if (slot == ch.size()) {
        color[node] = black;
        stack.pop_back();
        continue;
      }
      const ClassId next = ch[slot++];
      if (color[next] == grey) {
        std::vector<ClassId> cycle;
        auto it = std::find_if(stack.begin(), stack.end(), [&](const auto& e) { return e.first == next; });
        for (; it != stack.end(); ++it) cycle.push_back(it->first);
        return cycle;
      }
      if (color[next] == white) {
        color[next] = grey;
        stack.emplace_back(next, 0);
      }
    }
  }
  return std::nullopt;
}

/// Throws ErrorKind::cycle naming one offending cycle unless the graph is a DAG.
inline void validate(const Ontology& onto, const std::vector<std::string>& class_names = {}) {
  const auto cycle = find_cycle(onto);
  if (!cycle) return;
  std::string msg = "ontology contains a cycle [";
  for (std::size_t i = 0; i < cycle->size(); ++i) {
    const auto k = (*cycle)[i];
    msg += (i ? "," : "") + (k < class_names.size() ? class_names[k] : std::to_string(k));
  }
  throw Error(ErrorKind::cycle, msg + "]");
}

/// Text format: one `parent child` pair per line (tab-separated when names
/// contain spaces); blank lines and `#` comments are ignored.
inline Ontology read_ontology(const std::filesystem::path& path, const std::vector<std::string>& class_names) {
  std::unordered_map<std::string_view, ClassId> index;
  for (ClassId k = 0; k < class_names.size(); ++k) index.emplace(class_names[k], k);
  Ontology onto(class_names.size());
  const std::string content = detail::read_file(path);
  std::size_t line_no = 0;
  for (auto line : text::split(content, '\n')) {
    ++line_no;
    line = text::trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto fields = line.find('\t') != std::string_view::npos ? text::split(line, '\t') : text::split_ws(line);
    for (auto& f : fields) f = text::trim(f);
    const auto where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 2) throw Error(ErrorKind::malformed_manifest, where + ": expected 'parent child'");
    ClassId ids[2];
    for (int j = 0; j < 2; ++j) {
      const auto it = index.find(fields[j]);
      if (it == index.end())
        throw Error(ErrorKind::unknown_class, where + ": unknown class '" + std::string(fields[j]) + "'");
      ids[j] = it->second;
    }
    onto.add_edge(ids[0], ids[1]);
  }
  validate(onto, class_names);
  return onto;
}

inline void write_ontology(const Ontology& onto, const std::filesystem::path& path,
                           const std::vector<std::string>& class_names) {
  auto out = detail::open_out(path);
  for (ClassId p = 0; p < onto.num_classes(); ++p)
    for (ClassId c : onto.children(p)) out << class_names.at(p) << '\t' << class_names.at(c) << '\n';
}

}  // namespace psla
