#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <torch/torch.h>

#include "deshadow/image.hpp"
#include "deshadow/rng.hpp"

namespace deshadow {

enum class Split { Train, Test };
enum class Layout { Istd, Aistd };

Split parse_split(std::string_view text);
Layout parse_layout(std::string_view text);
std::string_view to_string(Split split);
std::string_view to_string(Layout layout);

/// One shadow image with its optional ground-truth companions.
struct ManifestRecord {
  std::string scene_id;
  std::string image_id;  // file stem, unique within a split
  std::filesystem::path shadow_path;
  std::optional<std::filesystem::path> mask_path;
  std::optional<std::filesystem::path> free_path;
};

/// Scene id from an ISTD-style file stem `<scene>-<variant>`, e.g. "12-3" -> "12".
/// Returns nullopt for names that do not follow the convention.
std::optional<std::string> scene_id_from_stem(std::string_view stem);

/// Orders scene ids numerically when both are integers, lexically otherwise.
bool scene_less(const std::string& a, const std::string& b);

/// Immutable list of records grouped by scene. Validated on construction:
/// every referenced file exists, image ids are unique, and test-split
/// records carry a mask and a shadow-free image.
class DatasetManifest {
 public:
  DatasetManifest(std::filesystem::path root, Split split, std::vector<ManifestRecord> records);

  const std::filesystem::path& root() const noexcept { return root_; }
  Split split() const noexcept { return split_; }
  std::span<const ManifestRecord> records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  const ManifestRecord& operator[](std::size_t i) const { return records_.at(i); }

  /// Scene ids in scene_less order.
  const std::vector<std::string>& scene_ids() const noexcept { return scene_ids_; }
  /// Record indices belonging to `scene`, in record order.
  const std::vector<std::size_t>& scene_members(const std::string& scene) const;

  /// Records whose scene is in `scenes` (order preserved).
  DatasetManifest subset(std::span<const std::string> scenes) const;

 private:
  std::filesystem::path root_;
  Split split_;
  std::vector<ManifestRecord> records_;
  std::vector<std::string> scene_ids_;
  std::unordered_map<std::string, std::vector<std::size_t>> members_;
};

/// Scans `<root>/<split>_A` (shadow), `<split>_B` (mask) and `<split>_C`
/// (shadow-free). For AISTD, `<split>_C_fixed_official` is preferred when
/// present.
DatasetManifest load_manifest(const std::filesystem::path& root, Split split, Layout layout);

/// One line per record: `scene_id \t shadow \t mask \t free` (missing paths empty).
void write_manifest(std::ostream& out, const DatasetManifest& manifest);

/// Splits off the last `fraction` of scenes (scene_less order, at least one
/// scene when fraction > 0) as a validation manifest.
std::pair<DatasetManifest, std::optional<DatasetManifest>> split_validation(const DatasetManifest& manifest,
                                                                            double fraction);

/// Unordered within-scene pair, as indices into the manifest.
struct ScenePair {
  std::string scene_id;
  std::size_t index_a = 0;
  std::size_t index_b = 0;
};

/// Sum over scenes of C(n, 2).
std::size_t expected_pair_count(const DatasetManifest& manifest);

/// Every unordered pair {a, b}, a != b, within each scene, shuffled under `seed`.
std::vector<ScenePair> build_training_pairs(const DatasetManifest& manifest, std::uint64_t seed);

/// Materialized pair.
struct ScenePairRecord {
  std::string scene_id;
  torch::Tensor image_a;
  torch::Tensor image_b;
};

struct ReferenceEntry {
  std::string source_id;
  std::filesystem::path path;
};

struct ReferenceImage {
  torch::Tensor image;
  std::string source_id;
};

/// Shadow-free images of `manifest` used as an unaligned style pool.
std::vector<ReferenceEntry> reference_pool_from_manifest(const DatasetManifest& manifest);
/// Every decodable image file in `dir`, sorted by name.
std::vector<ReferenceEntry> reference_pool_from_directory(const std::filesystem::path& dir);

/// Uniform draw. Throws Error(Data) on an empty pool.
const ReferenceEntry& sample_reference(std::span<const ReferenceEntry> pool, Rng& rng);

struct IdentityInput {
  torch::Tensor image;
  std::string scene_id;
};

/// Uniform draw over records that have a shadow-free image and whose scene
/// differs from `excluded_scene`. Returns the record index.
std::size_t sample_identity_input(const DatasetManifest& manifest, std::string_view excluded_scene, Rng& rng);

/// Decodes images into normalized tensors, with an optional fixed resize and
/// a byte-bounded cache.
class ImageCache {
 public:
  explicit ImageCache(std::optional<ImageSize> resize = std::nullopt, std::size_t max_bytes = std::size_t{1} << 30);

  torch::Tensor load(const std::filesystem::path& path);
  std::optional<ImageSize> resize() const noexcept { return resize_; }

 private:
  std::optional<ImageSize> resize_;
  std::size_t max_bytes_;
  std::size_t used_bytes_ = 0;
  std::unordered_map<std::string, torch::Tensor> cache_;
};

}  // namespace deshadow
