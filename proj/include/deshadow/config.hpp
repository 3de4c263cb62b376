#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deshadow/backbone.hpp"
#include "deshadow/dataset.hpp"
#include "deshadow/losses.hpp"
#include "deshadow/networks.hpp"

namespace deshadow {

/// Flat `key = value` configuration. Lines starting with `#` are comments.
/// Every key must belong to the built-in schema; unknown keys are rejected so
/// typos never fall back to defaults silently.
class Config {
 public:
  /// All schema keys at their built-in defaults.
  static Config defaults();
  static Config from_text(std::string_view text);

  void load_file(const std::filesystem::path& path);
  void merge_text(std::string_view text, std::string_view origin);
  void set(const std::string& key, const std::string& value);
  /// Parses `key=value`.
  void apply_override(std::string_view assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Schema order, one `key = value` per line.
  std::string to_text() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Every key of the schema in documentation order.
const std::vector<std::pair<std::string, std::string>>& config_schema();

struct TrainConfig {
  std::uint64_t seed = 0;
  bool deterministic = true;
  int epochs = 30;
  double lr = 5e-4;
  int lr_step = 10;
  double lr_gamma = 0.1;
  double adam_beta1 = 0.0;
  double adam_beta2 = 0.9;
  int d_steps_per_g = 5;
  int batch_size = 1;
  std::int64_t max_g_steps = 0;          // 0: unlimited
  std::int64_t max_pairs_per_epoch = 0;  // 0: all pairs
  std::int64_t checkpoint_every_g_steps = 0;
  double val_fraction = 0.1;

  LossWeights weights;
  bool use_os = true, use_perc = true, use_sfr = true, use_feat = true, use_id = true;

  std::filesystem::path data_root;
  Layout layout = Layout::Istd;
  std::optional<ImageSize> resize;
  std::filesystem::path reference_dir;
  std::size_t cache_bytes = std::size_t{1024} << 20;

  ComposeActivation compose = ComposeActivation::Clamp;
  GeneratorConfig generator;
  CriticConfig critic;

  std::filesystem::path vgg19_path, vgg16_path;
  std::string vgg19_sha256, vgg16_sha256;
  std::vector<std::string> vgg19_taps;

  bool trace_param_checksums = false;

  /// Weights after ablation toggles: a disabled term has weight 0.
  LossWeights effective_weights() const;
  /// lr · gamma^floor(epoch / step).
  double learning_rate_at(int epoch) const;
};

/// Validates and converts. Relative backbone paths resolve against
/// $DESHADOW_BACKBONE_DIR when set.
TrainConfig to_train_config(const Config& config);

/// Parses "WxH" (e.g. "64x48"); empty text gives nullopt.
std::optional<ImageSize> parse_size(std::string_view text);

}  // namespace deshadow
