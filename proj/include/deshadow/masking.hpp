#pragma once

#include <array>
#include <cstdint>

#include <torch/torch.h>

namespace deshadow {

inline constexpr int kOtsuBins = 256;

/// BT.601 luma of a [..., 3, H, W] tensor -> [..., 1, H, W]. Differentiable.
torch::Tensor to_greyscale(const torch::Tensor& image);

/// Histogram bin of `value` for a map spanning [lo, hi] (hi > lo):
/// floor((value - lo) / (hi - lo) * 256), with the maximum folded into bin 255.
int otsu_bin(float value, float lo, float hi) noexcept;

struct OtsuResult {
  /// Values strictly above this (i.e. in bins > `bin`) form class 1.
  double threshold = 0.0;
  /// Last histogram bin of class 0. -1 marks a constant map.
  int bin = -1;
  float lo = 0.0f;
  float hi = 0.0f;

  bool degenerate() const noexcept { return bin < 0; }
};

/// Otsu threshold over a 256-bin histogram of the map's own [min, max] range.
///
/// Between-class variance is compared in exact integer arithmetic on bin
/// indices, so ties resolve deterministically to the lowest bin. A constant
/// map returns its value as the threshold and puts every pixel in class 0.
OtsuResult otsu_threshold(const torch::Tensor& grey);

/// Binary {0, 1} mask, 1 = shadowed. Stored as float [N, 1, H, W] so it can be
/// multiplied into image tensors directly.
class ShadowMask {
 public:
  ShadowMask() = default;
  explicit ShadowMask(torch::Tensor values);

  const torch::Tensor& values() const noexcept { return values_; }
  /// 1 - M.
  ShadowMask inverted() const;

 private:
  torch::Tensor values_;
};

/// Mask of pixels whose |grey(I - Î)| falls above the per-image Otsu
/// threshold. Accepts [3, H, W] or [N, 3, H, W]; gradients never flow here.
ShadowMask compute_shadow_mask(const torch::Tensor& input, const torch::Tensor& output);

/// Per-pixel mask of a single [H, W] map thresholded by its Otsu result.
torch::Tensor otsu_binarize(const torch::Tensor& grey);

ShadowMask invert_mask(const ShadowMask& mask);

}  // namespace deshadow
