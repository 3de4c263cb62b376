#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <opencv2/core.hpp>
#include <torch/torch.h>

namespace deshadow {

/// Spatial size in pixels.
struct ImageSize {
  int height = 0;
  int width = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

// Internal images are float32 tensors shaped [3, H, W] (RGB) or, batched,
// [N, 3, H, W], with values in [-1, 1]. Greyscale maps use one channel.

/// Linear map [0, 255] -> [-1, 1].
float normalize(double raw) noexcept;

/// Inverse map, clamped to [0, 255] and rounded half away from zero.
std::uint8_t denormalize(double value) noexcept;

/// 8-bit BGR (OpenCV order) or greyscale image -> [C, H, W] RGB tensor in [-1, 1].
torch::Tensor normalize_image(const cv::Mat& raw);

/// [3, H, W] or [1, 3, H, W] tensor in [-1, 1] -> 8-bit BGR cv::Mat.
cv::Mat denormalize_image(const torch::Tensor& image);

/// Same as denormalize_image but keeps float precision: CV_32FC3 in [0, 255].
cv::Mat denormalize_image_float(const torch::Tensor& image);

/// Reads an 8-bit colour image from disk. Throws Error(Data) when unreadable.
cv::Mat read_rgb8(const std::filesystem::path& path);

/// Reads an 8-bit single-channel image from disk.
cv::Mat read_grey8(const std::filesystem::path& path);

/// Writes any cv::Mat; throws Error(Io) if the encoder reports failure.
void write_image(const std::filesystem::path& path, const cv::Mat& image);

/// Loads an image as a normalized tensor, optionally resized (area filter).
torch::Tensor load_image_tensor(const std::filesystem::path& path,
                                std::optional<ImageSize> resize = std::nullopt);

ImageSize image_size(const torch::Tensor& image);

}  // namespace deshadow
