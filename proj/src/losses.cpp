#include "deshadow/losses.hpp"

#include <cmath>

#include "deshadow/error.hpp"

namespace deshadow {

namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) fail(ErrorKind::Shape, std::string(what) + ": shape mismatch");
}

torch::Tensor mean_abs_diff(const torch::Tensor& a, const torch::Tensor& b) { return (a - b).abs().mean(); }

}  // namespace

torch::Tensor loss_os(const torch::Tensor& out_a, const torch::Tensor& out_b) {
  require_same_shape(out_a, out_b, "loss_os");
  return mean_abs_diff(out_a, out_b);
}

torch::Tensor loss_perc(const torch::Tensor& out_a, const torch::Tensor& out_b, FeatureBackbone& vgg19) {
  require_same_shape(out_a, out_b, "loss_perc");
  if (!vgg19) fail(ErrorKind::Backbone, "loss_perc: backbone not loaded");
  // One pass over the concatenated batch keeps the two branches on identical kernels.
  const auto n = out_a.size(0);
  auto feats = vgg19->forward(torch::cat({out_a, out_b}, 0));
  torch::Tensor total;
  for (const auto& f : feats) {
    auto term = mean_abs_diff(f.narrow(0, 0, n), f.narrow(0, n, n));
    total = total.defined() ? total + term : term;
  }
  return total;
}

torch::Tensor masked_rms(const torch::Tensor& input, const torch::Tensor& output, const ShadowMask& keep) {
  require_same_shape(input, output, "loss_sfr");
  const auto& m = keep.values();
  if (m.dim() != input.dim() || m.size(-3) != 1 || m.size(-1) != input.size(-1) || m.size(-2) != input.size(-2) ||
      m.size(0) != input.size(0)) {
    fail(ErrorKind::Shape, "loss_sfr: mask/image shape mismatch");
  }
  auto diff = m * (output - input);
  const double kept = m.sum().item<double>() * static_cast<double>(input.size(-3));
  if (kept == 0.0) return diff.sum() * 0.0;
  // linalg_vector_norm has a zero subgradient at the origin, unlike sqrt(mean(x^2)).
  return torch::linalg_vector_norm(diff, 2, c10::nullopt, false, c10::nullopt) / std::sqrt(kept);
}

torch::Tensor loss_sfr(const torch::Tensor& in_a, const torch::Tensor& out_a, const ShadowMask& keep_a,
                       const torch::Tensor& in_b, const torch::Tensor& out_b, const ShadowMask& keep_b) {
  return masked_rms(in_a, out_a, keep_a) + masked_rms(in_b, out_b, keep_b);
}

torch::Tensor loss_feat(const torch::Tensor& in_a, const torch::Tensor& out_a, const torch::Tensor& in_b,
                        const torch::Tensor& out_b, FeatureBackbone& vgg16) {
  require_same_shape(in_a, out_a, "loss_feat");
  require_same_shape(in_b, out_b, "loss_feat");
  if (!vgg16) fail(ErrorKind::Backbone, "loss_feat: backbone not loaded");
  auto branch = [&](const torch::Tensor& in, const torch::Tensor& out) {
    const auto n = in.size(0);
    auto f = vgg16->forward(torch::cat({out, in.detach()}, 0)).front();
    return mean_abs_diff(f.narrow(0, 0, n), f.narrow(0, n, n));
  };
  return branch(in_a, out_a) + branch(in_b, out_b);
}

torch::Tensor loss_id(const torch::Tensor& free_in, const torch::Tensor& free_out) {
  require_same_shape(free_in, free_out, "loss_id");
  return mean_abs_diff(free_in, free_out);
}

torch::Tensor adversarial_g(const CriticFn& critic, const torch::Tensor& out_a, const torch::Tensor& out_b) {
  auto s_a = critic(out_a).mean();
  auto s_b = critic(out_b).mean();
  return -(s_a + s_b) / 2.0;
}

torch::Tensor draw_mixing_weights(std::int64_t batch, Rng& rng, const torch::TensorOptions& options) {
  std::vector<double> eps(static_cast<std::size_t>(batch));
  for (auto& e : eps) e = rng.uniform01();
  return torch::tensor(eps, torch::kFloat64).to(options).view({batch, 1, 1, 1});
}

torch::Tensor interpolate(const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& eps) {
  return eps * fake + (1.0 - eps) * real;
}

torch::Tensor gradient_penalty_with(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                                    const torch::Tensor& eps) {
  const auto n = std::min(real.size(0), fake.size(0));
  if (real.sizes().slice(1) != fake.sizes().slice(1)) fail(ErrorKind::Shape, "gradient_penalty: shape mismatch");
  auto mixed = interpolate(real.narrow(0, 0, n).detach(), fake.narrow(0, 0, n).detach(), eps.narrow(0, 0, n))
                   .detach()
                   .requires_grad_(true);
  auto scores = critic(mixed);
  auto grads = torch::autograd::grad({scores.sum()}, {mixed}, {}, /*retain_graph=*/true, /*create_graph=*/true);
  if (grads.empty() || !grads[0].defined()) fail(ErrorKind::Shape, "gradient_penalty: critic gradient unavailable");
  auto norms = torch::linalg_vector_norm(grads[0].flatten(1), 2, std::vector<std::int64_t>{1}, false, c10::nullopt);
  return (norms - 1.0).pow(2).mean();
}

torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               Rng& rng) {
  const auto n = std::min(real.size(0), fake.size(0));
  return gradient_penalty_with(critic, real, fake, draw_mixing_weights(n, rng, real.options()));
}

CriticLoss adversarial_d(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                         double lambda_gp, Rng& rng) {
  CriticLoss out;
  out.score_fake = critic(fake.detach()).mean();
  out.score_real = critic(real).mean();
  // Summed in float64 so the logged total is reproducible from its logged parts.
  out.wasserstein = out.score_fake.to(torch::kFloat64) - out.score_real.to(torch::kFloat64);
  out.gp = gradient_penalty(critic, real, fake.detach(), rng);
  out.l_d = out.wasserstein + lambda_gp * out.gp.to(torch::kFloat64);
  return out;
}

GeneratorObjective total_generator_loss(const GeneratorTerms& terms, const LossWeights& weights) {
  GeneratorObjective out;
  auto scalar = [](const torch::Tensor& t) { return t.defined() ? t.detach().to(torch::kFloat64).item<double>() : 0.0; };
  if (!terms.l_g.defined()) fail(ErrorKind::Shape, "total_generator_loss: adversarial term missing");

  torch::Tensor total = terms.l_g.to(torch::kFloat64);
  auto add = [&](const torch::Tensor& t, double w) {
    if (t.defined() && w != 0.0) total = total + w * t.to(torch::kFloat64);
  };
  add(terms.os, weights.os);
  add(terms.perc, weights.perc);
  add(terms.sfr, weights.sfr);
  add(terms.feat, weights.feat);
  add(terms.id, weights.id);
  out.total = total;

  auto& b = out.breakdown;
  b.l_g = scalar(terms.l_g);
  b.l_os = scalar(terms.os);
  b.l_perc = scalar(terms.perc);
  b.l_sfr = scalar(terms.sfr);
  b.l_feat = scalar(terms.feat);
  b.l_id = scalar(terms.id);
  b.total = total.detach().item<double>();
  return out;
}

}  // namespace deshadow
