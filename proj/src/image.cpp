#include "deshadow/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "deshadow/error.hpp"

namespace deshadow {

float normalize(double raw) noexcept {
  return static_cast<float>(raw / 127.5 - 1.0);
}

std::uint8_t denormalize(double value) noexcept {
  double v = std::clamp((value + 1.0) * 127.5, 0.0, 255.0);
  return static_cast<std::uint8_t>(std::round(v));
}

torch::Tensor normalize_image(const cv::Mat& raw) {
  if (raw.empty() || raw.depth() != CV_8U) fail(ErrorKind::Data, "normalize_image: expected a non-empty 8-bit image");
  cv::Mat rgb;
  if (raw.channels() == 3) {
    cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
  } else if (raw.channels() == 1) {
    rgb = raw;
  } else {
    fail(ErrorKind::Data, "normalize_image: expected 1 or 3 channels");
  }
  rgb = rgb.isContinuous() ? rgb : rgb.clone();
  auto hwc = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, rgb.channels()}, torch::kUInt8);
  auto chw = hwc.permute({2, 0, 1}).to(torch::kFloat64);
  return (chw / 127.5 - 1.0).to(torch::kFloat32).contiguous();
}

namespace {

torch::Tensor as_chw(const torch::Tensor& image) {
  auto t = image.detach().to(torch::kCPU);
  if (t.dim() == 4) {
    TORCH_CHECK(t.size(0) == 1, "expected a single image, got batch of ", t.size(0));
    t = t[0];
  }
  if (t.dim() != 3 || t.size(0) != 3) fail(ErrorKind::Shape, "expected a [3, H, W] image tensor");
  return t;
}

}  // namespace

cv::Mat denormalize_image(const torch::Tensor& image) {
  auto t = as_chw(image).to(torch::kFloat64);
  // floor(v + 0.5) on non-negative values is round-half-away-from-zero.
  auto v = ((t + 1.0) * 127.5).clamp(0.0, 255.0);
  v = torch::floor(v + 0.5).to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(v.size(0)), static_cast<int>(v.size(1)), CV_8UC3, v.data_ptr<std::uint8_t>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

cv::Mat denormalize_image_float(const torch::Tensor& image) {
  auto t = as_chw(image).to(torch::kFloat32);
  auto v = ((t + 1.0f) * 127.5f).clamp(0.0f, 255.0f).permute({1, 2, 0}).contiguous();
  cv::Mat rgb(static_cast<int>(v.size(0)), static_cast<int>(v.size(1)), CV_32FC3, v.data_ptr<float>());
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  return bgr;
}

cv::Mat read_rgb8(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) fail(ErrorKind::Data, "cannot decode image: " + path.string());
  return m;
}

cv::Mat read_grey8(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) fail(ErrorKind::Data, "cannot decode image: " + path.string());
  return m;
}

void write_image(const std::filesystem::path& path, const cv::Mat& image) {
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), image);
  } catch (const cv::Exception& e) {
    fail(ErrorKind::Io, "cannot write " + path.string() + ": " + e.what());
  }
  if (!ok) fail(ErrorKind::Io, "cannot write " + path.string());
}

torch::Tensor load_image_tensor(const std::filesystem::path& path, std::optional<ImageSize> resize) {
  cv::Mat m = read_rgb8(path);
  if (resize && (m.rows != resize->height || m.cols != resize->width)) {
    cv::Mat small;
    cv::resize(m, small, cv::Size(resize->width, resize->height), 0, 0, cv::INTER_AREA);
    m = small;
  }
  return normalize_image(m);
}

ImageSize image_size(const torch::Tensor& image) {
  TORCH_CHECK(image.dim() >= 2, "image tensor needs spatial dims");
  return {static_cast<int>(image.size(-2)), static_cast<int>(image.size(-1))};
}

}  // namespace deshadow
