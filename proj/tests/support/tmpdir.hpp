#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

namespace carenet::testing {

/// Fresh per-test scratch directory under $CARENET_TEST_TMP (or the system
/// temp dir).
inline std::filesystem::path scratch_dir(const std::string& name) {
  const char* env = std::getenv("CARENET_TEST_TMP");
  const std::filesystem::path root = env ? std::filesystem::path(env)
                                         : std::filesystem::temp_directory_path() / "carenet-tests";
  const auto dir = root / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace carenet::testing
