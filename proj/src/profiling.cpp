#include "deshadow/profiling.hpp"

#include "deshadow/error.hpp"

namespace deshadow {

namespace {

struct Shape {
  std::int64_t c, h, w;
};

// Output extent of a convolution.
std::int64_t conv_out(std::int64_t n, std::int64_t k, std::int64_t stride, std::int64_t pad) {
  return (n + 2 * pad - k) / stride + 1;
}

class TableBuilder {
 public:
  explicit TableBuilder(Shape in) : shape_(in) {}

  void conv(const std::string& name, std::int64_t c_out, std::int64_t k, std::int64_t stride, std::int64_t pad) {
    Shape out{c_out, conv_out(shape_.h, k, stride, pad), conv_out(shape_.w, k, stride, pad)};
    if (out.h <= 0 || out.w <= 0) fail(ErrorKind::Shape, "input too small at layer " + name);
    LayerCost l{name, "conv", conv_params(shape_.c, c_out, k), 0.0, 0.0, out.c, out.h, out.w};
    l.macs = static_cast<double>(c_out) * shape_.c * k * k * out.h * out.w;
    cost_.layers.push_back(l);
    shape_ = out;
  }

  // Scatter form: every input pixel contributes a k x k x c_out patch.
  void conv_transpose(const std::string& name, std::int64_t c_out, std::int64_t k, std::int64_t stride,
                      std::int64_t pad, std::int64_t out_pad) {
    Shape out{c_out, (shape_.h - 1) * stride - 2 * pad + k + out_pad, (shape_.w - 1) * stride - 2 * pad + k + out_pad};
    LayerCost l{name, "conv_transpose", conv_params(shape_.c, c_out, k), 0.0, 0.0, out.c, out.h, out.w};
    l.macs = static_cast<double>(c_out) * shape_.c * k * k * shape_.h * shape_.w;
    cost_.layers.push_back(l);
    shape_ = out;
  }

  void elementwise(const std::string& name, const std::string& kind, std::int64_t params = 0) {
    LayerCost l{name, kind, params, 0.0, static_cast<double>(shape_.c * shape_.h * shape_.w), shape_.c, shape_.h,
                shape_.w};
    cost_.layers.push_back(l);
  }

  void norm(const std::string& name, bool affine) { elementwise(name, "norm", affine ? 2 * shape_.c : 0); }

  void pad(std::int64_t p) {
    shape_.h += 2 * p;
    shape_.w += 2 * p;
  }

  void pool(const std::string& name, std::int64_t k, std::int64_t stride, std::int64_t p) {
    shape_ = {shape_.c, conv_out(shape_.h, k, stride, p), conv_out(shape_.w, k, stride, p)};
    elementwise(name, "pool");
  }

  Shape& shape() { return shape_; }
  NetworkCost take() { return std::move(cost_); }

 private:
  Shape shape_;
  NetworkCost cost_;
};

}  // namespace

std::int64_t NetworkCost::params() const {
  std::int64_t n = 0;
  for (const auto& l : layers) n += l.params;
  return n;
}

double NetworkCost::flops() const {
  double f = 0.0;
  for (const auto& l : layers) f += l.flops();
  return f;
}

double conv_flops(std::int64_t c_in, std::int64_t c_out, std::int64_t kernel, std::int64_t out_h, std::int64_t out_w) {
  return 2.0 * static_cast<double>(c_out) * c_in * kernel * kernel * out_h * out_w;
}

std::int64_t conv_params(std::int64_t c_in, std::int64_t c_out, std::int64_t kernel, bool bias) {
  return c_out * (c_in * kernel * kernel + (bias ? 1 : 0));
}

NetworkCost generator_cost(const GeneratorConfig& config, ImageSize input) {
  const std::int64_t factor = std::int64_t{1} << config.num_downsamples;
  auto round_up = [factor](std::int64_t n) { return (n + factor - 1) / factor * factor; };
  TableBuilder t({config.input_channels, round_up(input.height), round_up(input.width)});
  std::int64_t width = config.base_width;
  t.pad(3);
  t.conv("ingest", width, 7, 1, 0);
  t.norm("ingest.norm", false);
  t.elementwise("ingest.relu", "act");
  for (int i = 0; i < config.num_downsamples; ++i) {
    const std::string n = "down" + std::to_string(i);
    t.conv(n, width * 2, 3, 2, 1);
    width *= 2;
    t.norm(n + ".norm", false);
    t.elementwise(n + ".relu", "act");
  }
  for (int i = 0; i < config.num_residual_blocks; ++i) {
    const std::string n = "res" + std::to_string(i);
    t.pad(1);
    t.conv(n + ".conv1", width, 3, 1, 0);
    t.norm(n + ".norm1", false);
    t.elementwise(n + ".relu", "act");
    t.pad(1);
    t.conv(n + ".conv2", width, 3, 1, 0);
    t.norm(n + ".norm2", false);
    t.elementwise(n + ".add", "add");
  }
  for (int i = 0; i < config.num_downsamples; ++i) {
    const std::string n = "up" + std::to_string(i);
    t.conv_transpose(n, width / 2, 3, 2, 1, 1);
    width /= 2;
    t.norm(n + ".norm", false);
    t.elementwise(n + ".relu", "act");
  }
  t.pad(3);
  t.conv("head", config.input_channels, 7, 1, 0);
  return t.take();
}

NetworkCost critic_cost(const CriticConfig& config, ImageSize input) {
  NetworkCost total;
  Shape in{config.input_channels, input.height, input.width};
  for (int s = 0; s < config.num_scales; ++s) {
    TableBuilder t(in);
    const std::string prefix = "scale" + std::to_string(s);
    if (s > 0) {
      t.pool(prefix + ".downsample", 3, 2, 1);
      in = t.shape();
    }
    std::int64_t width = config.base_width;
    for (int l = 0; l < config.layers_per_scale; ++l) {
      const std::string n = prefix + ".conv" + std::to_string(l);
      t.conv(n, width, 4, 2, 1);
      if (l > 0) t.norm(n + ".norm", true);
      t.elementwise(n + ".lrelu", "act");
      width = std::min<std::int64_t>(width * 2, config.max_width);
    }
    t.conv(prefix + ".score", 1, 3, 1, 1);
    auto part = t.take();
    total.layers.insert(total.layers.end(), part.layers.begin(), part.layers.end());
  }
  return total;
}

NetworkCost backbone_cost(BackboneVariant variant, const std::vector<std::string>& taps, ImageSize input) {
  const auto plan = variant == BackboneVariant::Vgg19Multiscale
                        ? std::vector<int>{64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512}
                        : std::vector<int>{64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512};
  const auto wanted = taps.empty() ? default_taps(variant) : taps;
  std::size_t remaining = wanted.size();
  TableBuilder t({3, input.height, input.width});
  int stage = 1, k = 1;
  for (int c : plan) {
    if (remaining == 0) break;
    if (c == 0) {
      t.pool("pool" + std::to_string(stage), 2, 2, 0);
      ++stage;
      k = 1;
      continue;
    }
    const std::string n = "conv" + std::to_string(stage) + "_" + std::to_string(k++);
    t.conv(n, c, 3, 1, 1);
    t.elementwise(n + ".relu", "act");
    if (std::find(wanted.begin(), wanted.end(), n) != wanted.end()) --remaining;
  }
  return t.take();
}

std::int64_t count_parameters(const GeneratorConfig& config) {
  const std::int64_t factor = std::int64_t{1} << config.num_downsamples;
  return generator_cost(config, {static_cast<int>(factor), static_cast<int>(factor)}).params();
}

std::int64_t count_parameters(const CriticConfig& config) {
  const int side = 1 << (config.layers_per_scale + config.num_scales + 1);
  return critic_cost(config, {side, side}).params();
}

nlohmann::ordered_json ProfileReport::to_json() const {
  nlohmann::ordered_json j;
  j["resolution"] = {{"height", resolution.height}, {"width", resolution.width}};
  j["generator_params"] = generator_params;
  j["critic_params"] = critic_params;
  j["total_params"] = total_params;
  j["forward_gflops_g"] = forward_gflops_g;
  j["forward_gflops_d"] = forward_gflops_d;
  j["train_step_gflops"] = train_step_gflops;
  j["backbone_train_gflops"] = backbone_train_gflops;
  j["conventions"] = {{"flops_per_mac", 2},
                      {"elementwise_flops_per_element", 1},
                      {"backward_factor", kBackwardFactor},
                      {"critic_steps_per_g", critic_steps_per_g},
                      {"per", "one image per network pass"}};
  return j;
}

ProfileReport profile(const GeneratorConfig& generator, const CriticConfig& critic, ImageSize resolution,
                      int critic_steps_per_g, const std::vector<std::string>& vgg19_taps, bool include_vgg19,
                      bool include_vgg16) {
  ProfileReport r;
  r.resolution = resolution;
  r.critic_steps_per_g = critic_steps_per_g;
  r.generator_params = count_parameters(generator);
  r.critic_params = count_parameters(critic);
  r.total_params = r.generator_params + r.critic_params;
  r.forward_gflops_g = generator_cost(generator, resolution).flops() / 1e9;
  r.forward_gflops_d = critic_cost(critic, resolution).flops() / 1e9;
  r.train_step_gflops = (1.0 + kBackwardFactor) * (r.forward_gflops_g + critic_steps_per_g * r.forward_gflops_d);
  double backbone = 0.0;
  if (include_vgg19) backbone += backbone_cost(BackboneVariant::Vgg19Multiscale, vgg19_taps, resolution).flops();
  if (include_vgg16) backbone += backbone_cost(BackboneVariant::Vgg16Conv22, {}, resolution).flops();
  r.backbone_train_gflops = (1.0 + kBackwardFactor) * backbone / 1e9;
  return r;
}

}  // namespace deshadow
