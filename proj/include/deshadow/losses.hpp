#pragma once

#include <functional>
#include <optional>
#include <string>

#include <torch/torch.h>

#include "deshadow/backbone.hpp"
#include "deshadow/masking.hpp"
#include "deshadow/rng.hpp"

namespace deshadow {

/// Scaling of each generator sub-loss and of the gradient penalty.
struct LossWeights {
  double gp = 10.0;
  double os = 1.0;
  double perc = 2.0;
  double sfr = 5.0;
  double feat = 2.0;
  double id = 1.0;
};

/// Per-step scalar record. Fields that do not apply to a step are nullopt.
struct LossBreakdown {
  std::optional<double> l_g, l_os, l_perc, l_sfr, l_feat, l_id, total;
  std::optional<double> l_d, wasserstein, gp;
};

/// Critic reduced to one score per sample: [N, 3, H, W] -> [N].
using CriticFn = std::function<torch::Tensor(const torch::Tensor&)>;

// All image arguments are [N, 3, H, W] tensors in [-1, 1]. Reductions are
// means, so the default weights do not depend on resolution.

/// Mean |Î_A - Î_B| over composed outputs.
torch::Tensor loss_os(const torch::Tensor& out_a, const torch::Tensor& out_b);

/// Sum over taps of mean |vgg_i(Î_A) - vgg_i(Î_B)|.
torch::Tensor loss_perc(const torch::Tensor& out_a, const torch::Tensor& out_b, FeatureBackbone& vgg19);

/// Root-mean-square of M̂ ⊙ (Î - I) over the elements M̂ keeps, one term per
/// branch. `keep_*` are the inverted shadow masks; a branch whose mask keeps
/// nothing contributes zero.
torch::Tensor loss_sfr(const torch::Tensor& in_a, const torch::Tensor& out_a, const ShadowMask& keep_a,
                       const torch::Tensor& in_b, const torch::Tensor& out_b, const ShadowMask& keep_b);

/// Single-branch term of loss_sfr.
torch::Tensor masked_rms(const torch::Tensor& input, const torch::Tensor& output, const ShadowMask& keep);

/// mean |vgg22(Î_A) - vgg22(I_A)| + mean |vgg22(Î_B) - vgg22(I_B)|.
torch::Tensor loss_feat(const torch::Tensor& in_a, const torch::Tensor& out_a, const torch::Tensor& in_b,
                        const torch::Tensor& out_b, FeatureBackbone& vgg16);

/// Mean |I_sf - Î_sf|.
torch::Tensor loss_id(const torch::Tensor& free_in, const torch::Tensor& free_out);

/// -(s_A + s_B) / 2, s being the batch-mean critic value of each branch.
torch::Tensor adversarial_g(const CriticFn& critic, const torch::Tensor& out_a, const torch::Tensor& out_b);

/// One mixing weight per sample, drawn from `rng` in sample order.
torch::Tensor draw_mixing_weights(std::int64_t batch, Rng& rng, const torch::TensorOptions& options);

/// Ī = ε·fake + (1-ε)·real with ε broadcast per sample.
torch::Tensor interpolate(const torch::Tensor& real, const torch::Tensor& fake, const torch::Tensor& eps);

/// Mean over the batch of (‖∇_Ī D(Ī)‖₂ - 1)². Batches of different size are
/// truncated to the smaller. The result stays differentiable w.r.t. critic
/// parameters.
torch::Tensor gradient_penalty(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                               Rng& rng);
torch::Tensor gradient_penalty_with(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                                    const torch::Tensor& eps);

struct CriticLoss {
  torch::Tensor l_d;          // differentiable
  torch::Tensor wasserstein;  // mean D(fake) - mean D(real)
  torch::Tensor gp;
  torch::Tensor score_fake;   // mean D(fake)
  torch::Tensor score_real;   // mean D(real)
};

/// l_d = mean D(fake) - mean D(real) + λ_gp · E_gp. `fake` must already be
/// detached from the generator graph.
CriticLoss adversarial_d(const CriticFn& critic, const torch::Tensor& real, const torch::Tensor& fake,
                         double lambda_gp, Rng& rng);

/// Generator sub-losses of one step. Undefined tensors are disabled terms.
struct GeneratorTerms {
  torch::Tensor l_g, os, perc, sfr, feat, id;
};

struct GeneratorObjective {
  torch::Tensor total;  // float64, differentiable
  LossBreakdown breakdown;
};

/// total = l_g + λ_os·l_os + λ_perc·l_perc + λ_sfr·l_sfr + λ_feat·l_feat + λ_id·l_id,
/// accumulated in float64 in exactly that order. Disabled terms contribute
/// nothing and are logged as 0.
GeneratorObjective total_generator_loss(const GeneratorTerms& terms, const LossWeights& weights);

}  // namespace deshadow
