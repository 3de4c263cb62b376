#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

#include "deshadow/weights_file.hpp"

namespace deshadow {

enum class BackboneVariant {
  Vgg19Multiscale,  // perceptual loss: conv1_2 .. conv5_2
  Vgg16Conv22,      // feature loss: conv2_2 only
};

std::string_view to_string(BackboneVariant variant);
BackboneVariant parse_backbone_variant(std::string_view text);

/// Default tap list for a variant. Taps are named `conv<stage>_<index>` and
/// read the activation after that convolution's ReLU.
std::vector<std::string> default_taps(BackboneVariant variant);

/// Frozen VGG feature extractor. Inputs are internal [-1, 1] images; the
/// ImageNet mean/std preprocessing happens inside forward(). Parameter names
/// follow torchvision (`features.<index>.weight`). Only the layers up to the
/// deepest tap are built.
class FeatureBackboneImpl : public torch::nn::Module {
 public:
  FeatureBackboneImpl(BackboneVariant variant, std::vector<std::string> taps);

  /// One feature map per tap, in tap order.
  std::vector<torch::Tensor> forward(const torch::Tensor& image);

  /// Copies matching tensors from `weights`. Throws Error(Backbone) when a
  /// required tensor is missing or has the wrong shape.
  void load(const TensorBundle& weights);

  BackboneVariant variant() const noexcept { return variant_; }
  const std::vector<std::string>& taps() const noexcept { return taps_; }

  /// Every conv tensor of the full variant with Kaiming-normal weights drawn
  /// from `seed`; stands in for pretrained weights in offline environments.
  static TensorBundle random_weights(BackboneVariant variant, std::uint64_t seed);

 private:
  struct Step {
    enum Kind { Conv, Pool } kind;
    int conv = -1;  // index into convs_
    int tap = -1;   // output slot when this conv is tapped
  };

  BackboneVariant variant_;
  std::vector<std::string> taps_;
  std::vector<Step> steps_;
  std::vector<torch::nn::Conv2d> convs_;
  std::vector<int> torchvision_index_;
  torch::Tensor mean_, std_;
};
TORCH_MODULE(FeatureBackbone);

/// Reads a weights file, verifies its SHA-256 when `expected_sha256` is set,
/// and returns a frozen backbone in eval mode.
FeatureBackbone load_backbone(BackboneVariant variant, const std::filesystem::path& weights_path,
                              const std::optional<std::string>& expected_sha256,
                              std::vector<std::string> taps = {});

/// Clears requires_grad on every parameter.
void freeze(torch::nn::Module& module);

}  // namespace deshadow
