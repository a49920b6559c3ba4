// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace psla {

enum class ErrorKind {
  invalid_argument,
  io,
  malformed_manifest,
  shape_mismatch,
  unknown_class,
  cycle,
  undefined_threshold,
  manifest_mismatch,
  empty_window,
  incompatible_init,
  numerical,
  config,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid_argument";
    case ErrorKind::io: return "io";
    case ErrorKind::malformed_manifest: return "malformed_manifest";
    case ErrorKind::shape_mismatch: return "shape_mismatch";
    case ErrorKind::unknown_class: return "unknown_class";
    case ErrorKind::cycle: return "cycle";
    case ErrorKind::undefined_threshold: return "undefined_threshold";
    case ErrorKind::manifest_mismatch: return "manifest_mismatch";
    case ErrorKind::empty_window: return "empty_window";
    case ErrorKind::incompatible_init: return "incompatible_init";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::config: return "config";
  }
  return "unknown";
}

/// Every failure raised by the toolkit carries a kind so callers (and the
/// CLI exit-code mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool cond, std::string_view msg) {
  if (!cond) throw Error(ErrorKind::invalid_argument, std::string(msg));
}

}  // namespace detail
}  // namespace psla
