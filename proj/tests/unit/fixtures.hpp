#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lma/bytes.hpp"

namespace lma::test {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(LMA_FIXTURES_DIR) / rel; }

inline Bytes load_fixture(const std::string& rel) { return read_file(fixture(rel).string()); }

// Sorted list of .wasm files under a fixtures subdirectory.
inline std::vector<std::filesystem::path> wasm_files(const std::string& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(fixture(dir)))
    if (e.path().extension() == ".wasm") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace lma::test
