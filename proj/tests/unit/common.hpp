#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "panelnet/erp_tensor.hpp"

namespace test {

inline panelnet::ErpTensor random_erp(std::uint64_t seed, int c, int h, int w) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  panelnet::ErpTensor t(c, h, w);
  for (auto& v : t.storage()) v = u(rng);
  return t;
}

// Fresh scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("panelnet_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace test
