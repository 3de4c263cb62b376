#include "deshadow/lab.hpp"

#include <array>
#include <cmath>

#include "deshadow/error.hpp"

namespace deshadow {

namespace {

constexpr double kEpsilon = 216.0 / 24389.0;
constexpr double kKappa = 24389.0 / 27.0;
constexpr double kXn = 0.95047;
constexpr double kYn = 1.0;
constexpr double kZn = 1.08883;

const std::array<double, 256>& linear_table() {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) {
      const double c = i / 255.0;
      t[static_cast<std::size_t>(i)] = c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
    }
    return t;
  }();
  return table;
}

double lab_f(double t) { return t > kEpsilon ? std::cbrt(t) : (kKappa * t + 16.0) / 116.0; }

}  // namespace

Lab srgb_to_lab(std::uint8_t r8, std::uint8_t g8, std::uint8_t b8) noexcept {
  const auto& lin = linear_table();
  const double r = lin[r8], g = lin[g8], b = lin[b8];
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
  const double yr = y / kYn;
  Lab out;
  out.l = yr > kEpsilon ? 116.0 * fy - 16.0 : kKappa * yr;
  out.a = 500.0 * (fx - fy);
  out.b = 200.0 * (fy - fz);
  return out;
}

cv::Mat rgb_to_lab(const cv::Mat& bgr8) {
  if (bgr8.empty() || bgr8.type() != CV_8UC3) fail(ErrorKind::Data, "rgb_to_lab expects an 8-bit 3-channel image");
  cv::Mat out(bgr8.rows, bgr8.cols, CV_64FC3);
  for (int y = 0; y < bgr8.rows; ++y) {
    const auto* src = bgr8.ptr<cv::Vec3b>(y);
    auto* dst = out.ptr<cv::Vec3d>(y);
    for (int x = 0; x < bgr8.cols; ++x) {
      const Lab lab = srgb_to_lab(src[x][2], src[x][1], src[x][0]);
      dst[x] = cv::Vec3d(lab.l, lab.a, lab.b);
    }
  }
  return out;
}

}  // namespace deshadow
