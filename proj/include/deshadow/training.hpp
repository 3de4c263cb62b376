#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "deshadow/backbone.hpp"
#include "deshadow/config.hpp"
#include "deshadow/dataset.hpp"
#include "deshadow/losses.hpp"
#include "deshadow/networks.hpp"

namespace deshadow {

/// Everything the loop reads from disk, prepared once.
struct TrainData {
  DatasetManifest train;
  std::optional<DatasetManifest> validation;
  std::vector<ScenePair> pairs;
  std::vector<ReferenceEntry> references;
};

/// Loads the train split, holds out the validation scenes, enumerates pairs
/// and builds the reference pool (the train shadow-free images unless
/// `data.reference_dir` names another directory).
TrainData prepare_training_data(const TrainConfig& config);

struct Backbones {
  FeatureBackbone vgg19{nullptr};
  FeatureBackbone vgg16{nullptr};
};

/// Loads only the backbones whose losses are enabled.
Backbones load_backbones(const TrainConfig& config);

/// A batch of scene pairs stacked into [B, 3, H, W] tensors.
struct PairBatch {
  std::vector<std::string> scene_ids;
  torch::Tensor image_a;
  torch::Tensor image_b;
};

enum class StepKind { Critic, Generator };

/// One optimizer step as written to the metrics log.
struct StepRecord {
  StepKind kind = StepKind::Critic;
  std::int64_t step = 0;    // global optimizer step, both networks
  std::int64_t g_step = 0;  // generator steps completed before this one
  std::int64_t d_step = 0;  // critic steps completed before this one
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown losses;
  std::optional<double> score_fake, score_real;
  std::optional<std::uint64_t> checksum_before_a, checksum_between_branches;
};

/// One JSON object per line; field order is fixed.
std::string to_json_line(const StepRecord& record);

/// Single writer of generator, critic and optimizer state.
class Trainer {
 public:
  /// `resolved_config` is stored verbatim in every checkpoint.
  Trainer(TrainConfig config, TrainData data, Backbones backbones, std::string resolved_config = {});

  /// Stacks the images of `pairs` into a batch.
  PairBatch load_pairs(std::span<const ScenePair> pairs);
  torch::Tensor load_images(std::span<const std::filesystem::path> paths);

  /// Critic update on l_d; the generator only runs under no-grad.
  StepRecord train_step_d(const PairBatch& pair, const torch::Tensor& reference, Rng& rng);
  /// Generator update on the weighted total; the critic is held fixed.
  /// `identity` holds one shadow-free image per pair, from other scenes.
  StepRecord train_step_g(const PairBatch& pair, const torch::Tensor& identity,
                          std::span<const std::string> identity_scenes);

  /// Runs until `epochs` or `max_g_steps` is reached. Appends to
  /// `<output_dir>/metrics.jsonl`, writes per-epoch checkpoints and returns
  /// their paths in order.
  std::vector<std::filesystem::path> run(const std::filesystem::path& output_dir,
                                         const std::function<void(const StepRecord&)>& observer = {});

  /// Runs exactly one generator iteration (d_steps_per_g critic steps and one
  /// generator step), returning the records in order.
  std::vector<StepRecord> iterate();

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

  bool finished() const;
  int epoch() const noexcept { return epoch_; }
  std::int64_t g_steps() const noexcept { return g_step_; }
  std::int64_t d_steps() const noexcept { return d_step_; }
  double current_lr() const { return config_.learning_rate_at(epoch_); }

  Generator& generator() noexcept { return generator_; }
  Critic& critic() noexcept { return critic_; }
  const TrainConfig& config() const noexcept { return config_; }
  const TrainData& data() const noexcept { return data_; }
  Backbones& backbones() noexcept { return backbones_; }

  /// Training-path forward of one branch: compose(I, G(I)).
  torch::Tensor branch_forward(const torch::Tensor& image);

 private:
  CriticFn critic_fn();
  void apply_learning_rate();
  std::vector<ScenePair> epoch_order(int epoch) const;
  std::int64_t pairs_per_epoch() const;
  void guard_finite(const StepRecord& record, const std::vector<torch::Tensor>& batch) const;
  StepRecord begin_record(StepKind kind) const;

  TrainConfig config_;
  TrainData data_;
  Backbones backbones_;
  std::string resolved_config_;
  ImageCache cache_;

  Generator generator_{nullptr};
  Critic critic_{nullptr};
  std::unique_ptr<torch::optim::Adam> optim_g_;
  std::unique_ptr<torch::optim::Adam> optim_d_;

  int epoch_ = 0;
  std::int64_t cursor_ = 0;  // pairs consumed by generator steps in this epoch
  std::int64_t g_step_ = 0;
  std::int64_t d_step_ = 0;
  std::vector<ScenePair> order_;
  int order_epoch_ = -1;
  std::filesystem::path dump_dir_;
};

/// Test-time forward: compose(I, G(I)) without gradients. Accepts [3, H, W]
/// or [N, 3, H, W].
torch::Tensor infer(Generator& generator, const torch::Tensor& image,
                    ComposeActivation activation = ComposeActivation::Clamp);

/// Generator restored from a checkpoint, ready for inference.
struct InferenceModel {
  Generator generator{nullptr};
  ComposeActivation compose = ComposeActivation::Clamp;
  std::string config_text;
  int epoch = 0;
  std::int64_t g_step = 0;

  torch::Tensor operator()(const torch::Tensor& image) { return infer(generator, image, compose); }
};

InferenceModel load_inference_model(const std::filesystem::path& checkpoint);

/// Index into `checkpoints` of the one with the lowest RMSE(A) on
/// `validation`; ties go to the earlier entry. Throws on an empty list.
std::size_t select_best_checkpoint(std::span<const std::filesystem::path> checkpoints,
                                   const DatasetManifest& validation, int threads = 1);

inline constexpr std::int64_t kCheckpointFormatVersion = 1;

/// Applies deterministic-mode runtime settings and seeds the torch generator.
void configure_runtime(bool deterministic, std::uint64_t seed);

}  // namespace deshadow
