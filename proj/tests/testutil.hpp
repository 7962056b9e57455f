#pragma once

#include "dptr/config.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>

namespace dptr_test {

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto base = std::filesystem::temp_directory_path();
    path_ = (base / ("dptr_" + tag + "_" + std::to_string(::getpid()) + "_" +
                     std::to_string(counter.fetch_add(1))))
                .string();
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

// Small-but-real settings for fast unit tests.
inline dptr::TrainConfig tiny_config() {
  dptr::TrainConfig cfg;
  cfg.max_len = 6;
  cfg.l_budget = 20;  // keeps up to 6 label chars in "a photo of a '...'"
  cfg.l_u = 7;
  cfg.canvas_h = 16;
  cfg.canvas_w = 48;
  cfg.patch_h = 4;
  cfg.patch_w = 8;
  cfg.batch = 8;
  cfg.epochs = 2;
  cfg.seed = 7;
  cfg.threads = 2;
  cfg.dims.feat_dim = 32;
  cfg.dims.heads = 4;
  cfg.dims.text_layers = 1;
  cfg.dims.image_layers = 1;
  cfg.dims.enc_layers = 1;
  cfg.dims.dec_layers = 1;
  cfg.dims.ffn_mult = 2;
  return cfg;
}

}  // namespace dptr_test
