#include "deshadow/networks.hpp"

#include <string>

#include "deshadow/error.hpp"

namespace nn = torch::nn;

namespace deshadow {

ComposeActivation parse_compose_activation(std::string_view text) {
  if (text == "clamp") return ComposeActivation::Clamp;
  if (text == "bounded-smooth") return ComposeActivation::BoundedSmooth;
  fail(ErrorKind::Config, "unknown compose activation '" + std::string(text) + "'");
}

std::string_view to_string(ComposeActivation activation) {
  return activation == ComposeActivation::Clamp ? "clamp" : "bounded-smooth";
}

namespace {

nn::InstanceNorm2d plain_norm(int channels) {
  return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(false).track_running_stats(false));
}

class ResidualBlockImpl : public nn::Module {
 public:
  explicit ResidualBlockImpl(int channels) {
    block_ = register_module("block", nn::Sequential(
        nn::ReflectionPad2d(1),
        nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
        plain_norm(channels),
        nn::ReLU(),
        nn::ReflectionPad2d(1),
        nn::Conv2d(nn::Conv2dOptions(channels, channels, 3)),
        plain_norm(channels)));
  }

  torch::Tensor forward(const torch::Tensor& x) { return x + block_->forward(x); }

 private:
  nn::Sequential block_{nullptr};
};
TORCH_MODULE(ResidualBlock);

}  // namespace

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(config) {
  if (config_.base_width <= 0 || config_.num_downsamples < 0 || config_.num_residual_blocks < 0) {
    fail(ErrorKind::Config, "invalid generator configuration");
  }
  nn::Sequential body;
  int width = config_.base_width;
  body->push_back(nn::ReflectionPad2d(3));
  body->push_back(nn::Conv2d(nn::Conv2dOptions(config_.input_channels, width, 7)));
  body->push_back(plain_norm(width));
  body->push_back(nn::ReLU());
  for (int i = 0; i < config_.num_downsamples; ++i) {
    body->push_back(nn::Conv2d(nn::Conv2dOptions(width, width * 2, 3).stride(2).padding(1)));
    body->push_back(plain_norm(width * 2));
    body->push_back(nn::ReLU());
    width *= 2;
  }
  for (int i = 0; i < config_.num_residual_blocks; ++i) body->push_back(ResidualBlock(width));
  for (int i = 0; i < config_.num_downsamples; ++i) {
    body->push_back(nn::ConvTranspose2d(
        nn::ConvTranspose2dOptions(width, width / 2, 3).stride(2).padding(1).output_padding(1)));
    body->push_back(plain_norm(width / 2));
    body->push_back(nn::ReLU());
    width /= 2;
  }
  body->push_back(nn::ReflectionPad2d(3));
  nn::Conv2d head(nn::Conv2dOptions(width, config_.input_channels, 7));
  body->push_back(head);
  body_ = register_module("body", body);

  initialize_weights(*this);
  torch::NoGradGuard no_grad;
  head->weight.zero_();
  head->bias.zero_();
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != config_.input_channels) {
    fail(ErrorKind::Shape, "generator expects [N, " + std::to_string(config_.input_channels) + ", H, W]");
  }
  const std::int64_t factor = std::int64_t{1} << config_.num_downsamples;
  const std::int64_t h = image.size(2), w = image.size(3);
  const std::int64_t pad_h = (factor - h % factor) % factor;
  const std::int64_t pad_w = (factor - w % factor) % factor;
  if (pad_h == 0 && pad_w == 0) return body_->forward(image);
  if (!config_.pad_to_divisible) {
    fail(ErrorKind::Shape, "input " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by " +
                               std::to_string(factor) + " and padding is disabled");
  }
  namespace F = torch::nn::functional;
  auto padded = F::pad(image, F::PadFuncOptions({0, pad_w, 0, pad_h}).mode(torch::kReflect));
  auto out = body_->forward(padded);
  return out.slice(2, 0, h).slice(3, 0, w);
}

CriticImpl::CriticImpl(CriticConfig config) : config_(config) {
  if (config_.num_scales < 1 || config_.layers_per_scale < 1 || config_.base_width <= 0) {
    fail(ErrorKind::Config, "invalid critic configuration");
  }
  for (int s = 0; s < config_.num_scales; ++s) {
    nn::Sequential scale;
    int in = config_.input_channels;
    int width = config_.base_width;
    for (int l = 0; l < config_.layers_per_scale; ++l) {
      scale->push_back(nn::Conv2d(nn::Conv2dOptions(in, width, 4).stride(2).padding(1)));
      if (l > 0) {
        scale->push_back(
            nn::InstanceNorm2d(nn::InstanceNorm2dOptions(width).affine(true).track_running_stats(false)));
      }
      scale->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
      in = width;
      width = std::min(width * 2, config_.max_width);
    }
    scale->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, 3).padding(1)));
    scales_.push_back(register_module("scale" + std::to_string(s), scale));
  }
  initialize_weights(*this);
}

std::vector<torch::Tensor> CriticImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != config_.input_channels) {
    fail(ErrorKind::Shape, "critic expects [N, " + std::to_string(config_.input_channels) + ", H, W]");
  }
  namespace F = torch::nn::functional;
  std::vector<torch::Tensor> maps;
  torch::Tensor x = image;
  for (std::size_t s = 0; s < scales_.size(); ++s) {
    if (s > 0) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(3).stride(2).padding(1).count_include_pad(false));
    maps.push_back(scales_[s]->forward(x));
  }
  return maps;
}

torch::Tensor compose_output(const torch::Tensor& input, const torch::Tensor& residual,
                             ComposeActivation activation) {
  if (input.sizes() != residual.sizes()) fail(ErrorKind::Shape, "compose_output: input/residual shape mismatch");
  auto sum = input + residual;
  return activation == ComposeActivation::Clamp ? sum.clamp(-1.0, 1.0) : torch::tanh(sum);
}

torch::Tensor reduce_scores(const std::vector<torch::Tensor>& score_maps) {
  TORCH_CHECK(!score_maps.empty(), "reduce_scores: no score maps");
  torch::Tensor total;
  std::int64_t count = 0;
  for (const auto& m : score_maps) {
    auto per_sample = m.flatten(1).sum(1);
    total = total.defined() ? total + per_sample : per_sample;
    count += m[0].numel();
  }
  return total / static_cast<double>(count);
}

void initialize_weights(nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& child : module.modules(/*include_self=*/false)) {
    if (auto* conv = child->as<nn::Conv2d>()) {
      conv->weight.normal_(0.0, 0.02);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* convt = child->as<nn::ConvTranspose2d>()) {
      convt->weight.normal_(0.0, 0.02);
      if (convt->bias.defined()) convt->bias.zero_();
    } else if (auto* norm = child->as<nn::InstanceNorm2d>()) {
      if (norm->weight.defined()) norm->weight.normal_(1.0, 0.02);
      if (norm->bias.defined()) norm->bias.zero_();
    }
  }
}

std::uint64_t parameter_checksum(const nn::Module& module) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const torch::Tensor& t) {
    auto c = t.detach().to(torch::kCPU).contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const std::size_t n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : module.parameters()) mix(p);
  for (const auto& b : module.buffers()) mix(b);
  return h;
}

std::int64_t runtime_parameter_count(const nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace deshadow
