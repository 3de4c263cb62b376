#include "deshadow/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <ATen/CPUGeneratorImpl.h>

#include "deshadow/error.hpp"

namespace nn = torch::nn;

namespace deshadow {

namespace {

// Channel plan per stage; `M` (0) marks a max-pool.
std::vector<int> layer_plan(BackboneVariant variant) {
  if (variant == BackboneVariant::Vgg19Multiscale) {
    return {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0};
  }
  return {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0};
}

struct PlannedConv {
  std::string name;
  int in = 0, out = 0;
  int torchvision_index = 0;
};

std::vector<PlannedConv> planned_convs(BackboneVariant variant) {
  std::vector<PlannedConv> convs;
  int in = 3, stage = 1, k = 1, index = 0;
  for (int c : layer_plan(variant)) {
    if (c == 0) {
      ++stage;
      k = 1;
      index += 1;
      continue;
    }
    convs.push_back({"conv" + std::to_string(stage) + "_" + std::to_string(k), in, c, index});
    in = c;
    ++k;
    index += 2;  // conv + relu
  }
  return convs;
}

}  // namespace

std::string_view to_string(BackboneVariant variant) {
  return variant == BackboneVariant::Vgg19Multiscale ? "vgg19_multiscale" : "vgg16_conv22";
}

BackboneVariant parse_backbone_variant(std::string_view text) {
  if (text == "vgg19_multiscale" || text == "vgg19") return BackboneVariant::Vgg19Multiscale;
  if (text == "vgg16_conv22" || text == "vgg16") return BackboneVariant::Vgg16Conv22;
  fail(ErrorKind::Config, "unknown backbone variant '" + std::string(text) + "'");
}

std::vector<std::string> default_taps(BackboneVariant variant) {
  if (variant == BackboneVariant::Vgg19Multiscale) return {"conv1_2", "conv2_2", "conv3_2", "conv4_2", "conv5_2"};
  return {"conv2_2"};
}

FeatureBackboneImpl::FeatureBackboneImpl(BackboneVariant variant, std::vector<std::string> taps)
    : variant_(variant), taps_(taps.empty() ? default_taps(variant) : std::move(taps)) {
  const auto plan = planned_convs(variant);
  std::map<std::string, int> tap_slot;
  for (std::size_t i = 0; i < taps_.size(); ++i) {
    bool known = std::any_of(plan.begin(), plan.end(), [&](const PlannedConv& p) { return p.name == taps_[i]; });
    if (!known) fail(ErrorKind::Config, "backbone " + std::string(to_string(variant)) + " has no layer " + taps_[i]);
    tap_slot[taps_[i]] = static_cast<int>(i);
  }
  // Walk the plan again, stopping after the deepest tap.
  std::size_t remaining = tap_slot.size();
  std::size_t conv_i = 0;
  for (int c : layer_plan(variant)) {
    if (remaining == 0) break;
    if (c == 0) {
      steps_.push_back({Step::Pool});
      continue;
    }
    const auto& pc = plan[conv_i++];
    auto conv = register_module("features_" + std::to_string(pc.torchvision_index),
                                nn::Conv2d(nn::Conv2dOptions(pc.in, pc.out, 3).padding(1)));
    convs_.push_back(conv);
    torchvision_index_.push_back(pc.torchvision_index);
    Step step{Step::Conv, static_cast<int>(convs_.size()) - 1, -1};
    if (auto it = tap_slot.find(pc.name); it != tap_slot.end()) {
      step.tap = it->second;
      --remaining;
    }
    steps_.push_back(step);
  }
  mean_ = register_buffer("mean", torch::tensor({0.485f, 0.456f, 0.406f}).view({1, 3, 1, 1}));
  std_ = register_buffer("std", torch::tensor({0.229f, 0.224f, 0.225f}).view({1, 3, 1, 1}));
  freeze(*this);
  eval();
}

std::vector<torch::Tensor> FeatureBackboneImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) fail(ErrorKind::Shape, "backbone expects [N, 3, H, W]");
  auto x = ((image + 1.0) * 0.5 - mean_) / std_;
  std::vector<torch::Tensor> out(taps_.size());
  for (const auto& step : steps_) {
    if (step.kind == Step::Pool) {
      if (x.size(2) < 2 || x.size(3) < 2) fail(ErrorKind::Shape, "image too small for the configured backbone taps");
      x = torch::max_pool2d(x, 2, 2);
    } else {
      x = torch::relu(convs_[static_cast<std::size_t>(step.conv)]->forward(x));
      if (step.tap >= 0) out[static_cast<std::size_t>(step.tap)] = x;
    }
  }
  return out;
}

void FeatureBackboneImpl::load(const TensorBundle& weights) {
  std::map<std::string, const torch::Tensor*> by_name;
  for (const auto& [name, t] : weights) by_name[name] = &t;
  torch::NoGradGuard no_grad;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    const std::string prefix = "features." + std::to_string(torchvision_index_[i]);
    for (auto [suffix, target] : {std::pair{".weight", &convs_[i]->weight}, std::pair{".bias", &convs_[i]->bias}}) {
      auto it = by_name.find(prefix + suffix);
      if (it == by_name.end()) fail(ErrorKind::Backbone, "weights file lacks " + prefix + suffix);
      if (it->second->sizes() != target->sizes()) {
        fail(ErrorKind::Backbone, "shape mismatch for " + prefix + suffix);
      }
      target->copy_(*it->second);
    }
  }
}

TensorBundle FeatureBackboneImpl::random_weights(BackboneVariant variant, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  TensorBundle out;
  for (const auto& pc : planned_convs(variant)) {
    const double stddev = std::sqrt(2.0 / (pc.out * 9.0));
    auto w = at::normal(0.0, stddev, {pc.out, pc.in, 3, 3}, gen, torch::TensorOptions().dtype(torch::kFloat32));
    out.emplace_back("features." + std::to_string(pc.torchvision_index) + ".weight", w);
    out.emplace_back("features." + std::to_string(pc.torchvision_index) + ".bias", torch::zeros({pc.out}));
  }
  return out;
}

FeatureBackbone load_backbone(BackboneVariant variant, const std::filesystem::path& weights_path,
                              const std::optional<std::string>& expected_sha256, std::vector<std::string> taps) {
  if (!std::filesystem::exists(weights_path)) {
    fail(ErrorKind::Backbone, "backbone weights not found: " + weights_path.string());
  }
  if (expected_sha256 && !expected_sha256->empty()) {
    const std::string actual = sha256_file(weights_path);
    if (actual != *expected_sha256) {
      fail(ErrorKind::Backbone, "checksum mismatch for " + weights_path.string() + ": expected " +
                                    *expected_sha256 + ", got " + actual);
    }
  }
  FeatureBackbone backbone(variant, std::move(taps));
  backbone->load(read_weights_file(weights_path));
  freeze(*backbone);
  backbone->eval();
  return backbone;
}

void freeze(nn::Module& module) {
  for (auto& p : module.parameters()) p.set_requires_grad(false);
}

}  // namespace deshadow
