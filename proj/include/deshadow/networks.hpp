#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace deshadow {

/// How the residual-plus-input sum is mapped back into [-1, 1].
enum class ComposeActivation {
  Clamp,          // hard clamp; identity on interior values
  BoundedSmooth,  // tanh
};

ComposeActivation parse_compose_activation(std::string_view text);
std::string_view to_string(ComposeActivation activation);

struct GeneratorConfig {
  int input_channels = 3;
  int base_width = 64;
  int num_downsamples = 3;
  int num_residual_blocks = 9;
  /// Reflect-pad inputs up to a multiple of 2^num_downsamples and crop back.
  bool pad_to_divisible = true;
};

struct CriticConfig {
  int input_channels = 3;
  int base_width = 64;
  int max_width = 512;
  int num_scales = 2;
  int layers_per_scale = 4;
};

/// Residual encoder-decoder: 7x7 ingest, strided downsampling, residual
/// bottleneck, transposed-convolution decoder, 7x7 head. Instance norm
/// without affine parameters throughout. The head starts at zero, so an
/// untrained generator emits an all-zero residual.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config = {});

  /// Raw correction residual with the same shape as `image` ([N, 3, H, W]).
  torch::Tensor forward(const torch::Tensor& image);

  const GeneratorConfig& config() const noexcept { return config_; }

 private:
  GeneratorConfig config_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Generator);

/// Multi-scale fully convolutional critic. Scale k sees the input
/// average-pooled k times; each scale stacks stride-2 4x4 convolutions with
/// affine instance norm (none on the first layer) and a 3x3 projection to one
/// unbounded score channel.
class CriticImpl : public torch::nn::Module {
 public:
  explicit CriticImpl(CriticConfig config = {});

  /// One score map per scale, finest first.
  std::vector<torch::Tensor> forward(const torch::Tensor& image);

  const CriticConfig& config() const noexcept { return config_; }

 private:
  CriticConfig config_;
  std::vector<torch::nn::Sequential> scales_;
};
TORCH_MODULE(Critic);

/// Î = activation(I + R).
torch::Tensor compose_output(const torch::Tensor& input, const torch::Tensor& residual,
                             ComposeActivation activation = ComposeActivation::Clamp);

/// Per-sample critic value: the mean over every element of every score map
/// belonging to that sample. Returns shape [N].
torch::Tensor reduce_scores(const std::vector<torch::Tensor>& score_maps);

/// pix2pixHD-style init: conv weights ~ N(0, 0.02), norm scales ~ N(1, 0.02),
/// biases zero.
void initialize_weights(torch::nn::Module& module);

/// FNV-1a over the raw bytes of every parameter and buffer, in registration order.
std::uint64_t parameter_checksum(const torch::nn::Module& module);

std::int64_t runtime_parameter_count(const torch::nn::Module& module);

}  // namespace deshadow
