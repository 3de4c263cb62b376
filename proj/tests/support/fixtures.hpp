#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "deshadow/config.hpp"

namespace deshadow::testing {

/// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "deshadow");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Writes scenes of the given sizes as tiny flat images in ISTD layout,
/// scene ids 1..n, with masks and shadow-free images.
void write_scene_files(const std::filesystem::path& root, const std::string& split, const std::vector<int>& sizes,
                       int height = 4, int width = 4);

/// Random-initialized backbone files `vgg19.dsw` and `vgg16.dsw` in `dir`.
void write_random_backbones(const std::filesystem::path& dir, std::uint64_t seed = 7);

/// Narrow networks and absolute backbone paths for fast training runs.
Config small_config(const std::filesystem::path& data_root, const std::filesystem::path& backbone_dir);

}  // namespace deshadow::testing
