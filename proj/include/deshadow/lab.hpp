#pragma once

#include <cstdint>

#include <opencv2/core.hpp>

namespace deshadow {

struct Lab {
  double l = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// sRGB (8-bit, D65) -> CIELAB.
///
/// Convention: channel / 255, inverse sRGB transfer (linear below 0.04045,
/// ((c + 0.055) / 1.055)^2.4 above), the IEC 61966-2-1 RGB->XYZ matrix,
/// reference white Xn = 0.95047, Yn = 1, Zn = 1.08883, and the CIE
/// epsilon = 216/24389, kappa = 24389/27 piecewise cube root.
Lab srgb_to_lab(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;

/// 8-bit BGR cv::Mat -> CV_64FC3 with channels (L, a, b).
cv::Mat rgb_to_lab(const cv::Mat& bgr8);

}  // namespace deshadow
