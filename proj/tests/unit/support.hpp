// Copyright 2026 The psla-kit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <gtest/gtest.h>

#include "psla/error.hpp"

namespace psla::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = "psla_";
    if (info) name += std::string(info->test_suite_name()) + "_" + info->name();
    for (auto& ch : name)
      if (ch == '/') ch = '_';
    static int counter = 0;
    name += "_" + std::to_string(counter++);
    path_ = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

/// Runs f and returns the kind of the psla::Error it throws.
template <class F>
::testing::AssertionResult throws_kind(F&& f, ErrorKind expected) {
  try {
    f();
  } catch (const Error& e) {
    if (e.kind() == expected) return ::testing::AssertionSuccess();
    return ::testing::AssertionFailure() << "threw " << to_string(e.kind()) << ": " << e.what();
  } catch (const std::exception& e) {
    return ::testing::AssertionFailure() << "threw a non-psla exception: " << e.what();
  }
  return ::testing::AssertionFailure() << "did not throw";
}

}  // namespace psla::testing
