#pragma once

#include <filesystem>
#include <string>

namespace testutil {

// Fresh scratch directory per test, removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("ensmooth_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path operator/(const std::string& leaf) const { return path / leaf; }
};

}  // namespace testutil
