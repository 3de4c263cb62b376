#include "deshadow/masking.hpp"

#include <algorithm>
#include <cmath>

#include "deshadow/error.hpp"

namespace deshadow {

torch::Tensor to_greyscale(const torch::Tensor& image) {
  if (image.dim() < 3 || image.size(-3) != 3) fail(ErrorKind::Shape, "to_greyscale expects a 3-channel image");
  auto r = image.select(-3, 0);
  auto g = image.select(-3, 1);
  auto b = image.select(-3, 2);
  return (0.299 * r + 0.587 * g + 0.114 * b).unsqueeze(-3);
}

int otsu_bin(float value, float lo, float hi) noexcept {
  const double scaled = (static_cast<double>(value) - lo) / (static_cast<double>(hi) - lo) * kOtsuBins;
  const int b = static_cast<int>(std::floor(scaled));
  return std::clamp(b, 0, kOtsuBins - 1);
}

OtsuResult otsu_threshold(const torch::Tensor& grey) {
  if (grey.numel() == 0) fail(ErrorKind::Shape, "otsu_threshold on an empty map");
  auto flat = grey.detach().to(torch::kCPU, torch::kFloat32).contiguous().view(-1);
  const float* data = flat.data_ptr<float>();
  const std::int64_t n = flat.numel();

  float lo = data[0], hi = data[0];
  for (std::int64_t i = 1; i < n; ++i) {
    lo = std::min(lo, data[i]);
    hi = std::max(hi, data[i]);
  }
  OtsuResult result;
  result.lo = lo;
  result.hi = hi;
  if (!(hi > lo)) {
    result.threshold = lo;
    return result;
  }

  std::array<std::int64_t, kOtsuBins> hist{};
  for (std::int64_t i = 0; i < n; ++i) ++hist[otsu_bin(data[i], lo, hi)];

  std::int64_t total_sum = 0;
  for (int b = 0; b < kOtsuBins; ++b) total_sum += hist[b] * b;

  // sigma_B^2(t) is proportional to (S * W0 - N * S0)^2 / (W0 * W1).
  using i128 = __int128;
  i128 best_num = -1;
  i128 best_den = 1;
  int best_bin = 0;
  std::int64_t w0 = 0, s0 = 0;
  for (int t = 0; t < kOtsuBins; ++t) {
    w0 += hist[t];
    s0 += hist[t] * t;
    const std::int64_t w1 = n - w0;
    i128 num = 0, den = 1;
    if (w0 > 0 && w1 > 0) {
      const i128 diff = static_cast<i128>(total_sum) * w0 - static_cast<i128>(n) * s0;
      num = diff * diff;
      den = static_cast<i128>(w0) * w1;
    }
    if (num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best_bin = t;
    }
  }
  result.bin = best_bin;
  result.threshold = static_cast<double>(lo) + (best_bin + 1) * ((static_cast<double>(hi) - lo) / kOtsuBins);
  return result;
}

ShadowMask::ShadowMask(torch::Tensor values) : values_(std::move(values)) {}

ShadowMask ShadowMask::inverted() const { return ShadowMask(1.0f - values_); }

ShadowMask invert_mask(const ShadowMask& mask) { return mask.inverted(); }

torch::Tensor otsu_binarize(const torch::Tensor& grey) {
  auto map = grey.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  auto out = torch::zeros_like(map);
  const OtsuResult otsu = otsu_threshold(map);
  if (otsu.degenerate()) return out;
  const float* src = map.data_ptr<float>();
  float* dst = out.data_ptr<float>();
  for (std::int64_t i = 0; i < map.numel(); ++i) {
    dst[i] = otsu_bin(src[i], otsu.lo, otsu.hi) > otsu.bin ? 1.0f : 0.0f;
  }
  return out;
}

ShadowMask compute_shadow_mask(const torch::Tensor& input, const torch::Tensor& output) {
  if (input.sizes() != output.sizes()) fail(ErrorKind::Shape, "compute_shadow_mask: input/output shape mismatch");
  torch::NoGradGuard no_grad;
  const bool batched = input.dim() == 4;
  auto diff = (batched ? input : input.unsqueeze(0)).detach() - (batched ? output : output.unsqueeze(0)).detach();
  auto magnitude = to_greyscale(diff).abs().to(torch::kCPU, torch::kFloat32);
  std::vector<torch::Tensor> masks;
  masks.reserve(static_cast<std::size_t>(magnitude.size(0)));
  for (std::int64_t i = 0; i < magnitude.size(0); ++i) masks.push_back(otsu_binarize(magnitude[i]));
  auto stacked = torch::stack(masks).to(input.device());
  return ShadowMask(batched ? stacked : stacked[0]);
}

}  // namespace deshadow
