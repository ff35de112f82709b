#pragma once

#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "ordikit/error.hpp"
#include "ordikit/io.hpp"

namespace testing_support {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(ORDIKIT_FIXTURES) / name; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("ordikit-" + tag + "-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "-" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing_support

/// Expects `stmt` to throw ordikit::Error with the given code.
#define EXPECT_ORDIKIT_ERROR(stmt, expected_code)                                   \
  do {                                                                              \
    try {                                                                           \
      stmt;                                                                         \
      ADD_FAILURE() << #stmt " did not throw (expected " << (expected_code) << ")"; \
    } catch (const ordikit::Error& e_) {                                            \
      EXPECT_EQ(e_.code(), expected_code) << e_.what();                             \
    }                                                                               \
  } while (0)
