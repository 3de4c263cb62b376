#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deshadow/backbone.hpp"
#include "deshadow/image.hpp"
#include "deshadow/networks.hpp"

namespace deshadow {

/// Backward pass is costed at this multiple of the forward pass.
inline constexpr double kBackwardFactor = 2.0;

/// One row of an architecture table.
struct LayerCost {
  std::string name;
  std::string kind;  // conv, conv_transpose, norm, act, add, pool
  std::int64_t params = 0;
  double macs = 0.0;              // multiply-accumulates (convolutions only)
  double elementwise_flops = 0.0; // 1 FLOP per output element for everything else
  std::int64_t out_channels = 0;
  std::int64_t out_height = 0;
  std::int64_t out_width = 0;

  double flops() const { return 2.0 * macs + elementwise_flops; }
};

struct NetworkCost {
  std::vector<LayerCost> layers;

  std::int64_t params() const;
  double flops() const;
};

/// 2 · c_out · c_in · k² · H_out · W_out.
double conv_flops(std::int64_t c_in, std::int64_t c_out, std::int64_t kernel, std::int64_t out_h, std::int64_t out_w);
/// c_out · (c_in · k² + 1) with bias, c_out · c_in · k² without.
std::int64_t conv_params(std::int64_t c_in, std::int64_t c_out, std::int64_t kernel, bool bias = true);

NetworkCost generator_cost(const GeneratorConfig& config, ImageSize input);
NetworkCost critic_cost(const CriticConfig& config, ImageSize input);
NetworkCost backbone_cost(BackboneVariant variant, const std::vector<std::string>& taps, ImageSize input);

std::int64_t count_parameters(const GeneratorConfig& config);
std::int64_t count_parameters(const CriticConfig& config);

struct ProfileReport {
  ImageSize resolution;
  std::int64_t generator_params = 0;
  std::int64_t critic_params = 0;
  std::int64_t total_params = 0;
  double forward_gflops_g = 0.0;
  double forward_gflops_d = 0.0;
  /// (1 + kBackwardFactor) · (forward_g + d_steps · forward_d) per image.
  double train_step_gflops = 0.0;
  /// Loss backbones, forward and backward, per generator step; not in train_step_gflops.
  double backbone_train_gflops = 0.0;
  int critic_steps_per_g = 5;

  nlohmann::ordered_json to_json() const;
};

ProfileReport profile(const GeneratorConfig& generator, const CriticConfig& critic, ImageSize resolution,
                      int critic_steps_per_g = 5, const std::vector<std::string>& vgg19_taps = {},
                      bool include_vgg19 = true, bool include_vgg16 = true);

}  // namespace deshadow
