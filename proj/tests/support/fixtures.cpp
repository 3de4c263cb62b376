#include "fixtures.hpp"

#include <atomic>
#include <random>

#include <unistd.h>

#include <opencv2/imgcodecs.hpp>

#include "deshadow/backbone.hpp"
#include "deshadow/weights_file.hpp"

namespace deshadow::testing {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(rd()));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_scene_files(const fs::path& root, const std::string& split, const std::vector<int>& sizes, int height,
                       int width) {
  for (const char* suffix : {"_A", "_B", "_C"}) fs::create_directories(root / (split + suffix));
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    for (int v = 1; v <= sizes[s]; ++v) {
      const std::string name = std::to_string(s + 1) + "-" + std::to_string(v) + ".png";
      const auto shade = static_cast<double>(20 * (s % 10) + v);
      cv::imwrite((root / (split + "_A") / name).string(), cv::Mat(height, width, CV_8UC3, cv::Scalar::all(shade)));
      cv::imwrite((root / (split + "_B") / name).string(), cv::Mat(height, width, CV_8UC1, cv::Scalar(0)));
      cv::imwrite((root / (split + "_C") / name).string(),
                  cv::Mat(height, width, CV_8UC3, cv::Scalar::all(shade + 50)));
    }
  }
}

void write_random_backbones(const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir);
  write_weights_file(dir / "vgg19.dsw", FeatureBackboneImpl::random_weights(BackboneVariant::Vgg19Multiscale, seed));
  write_weights_file(dir / "vgg16.dsw", FeatureBackboneImpl::random_weights(BackboneVariant::Vgg16Conv22, seed + 1));
}

Config small_config(const fs::path& data_root, const fs::path& backbone_dir) {
  Config c = Config::defaults();
  c.set("data.root", data_root.string());
  c.set("backbone.vgg19.path", (backbone_dir / "vgg19.dsw").string());
  c.set("backbone.vgg16.path", (backbone_dir / "vgg16.dsw").string());
  c.set("backbone.vgg19.taps", "conv1_2,conv2_2,conv3_2");
  c.set("generator.base_width", "8");
  c.set("generator.num_downsamples", "2");
  c.set("generator.num_residual_blocks", "2");
  c.set("critic.base_width", "8");
  c.set("critic.max_width", "32");
  c.set("critic.layers_per_scale", "2");
  c.set("val_fraction", "0");
  c.set("data.cache_mb", "64");
  return c;
}

}  // namespace deshadow::testing
