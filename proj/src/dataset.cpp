#include "deshadow/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include "deshadow/error.hpp"

namespace fs = std::filesystem;

namespace deshadow {

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  fail(ErrorKind::Config, "unknown split '" + std::string(text) + "' (expected train|test)");
}

Layout parse_layout(std::string_view text) {
  if (text == "istd") return Layout::Istd;
  if (text == "aistd") return Layout::Aistd;
  fail(ErrorKind::Config, "unknown layout '" + std::string(text) + "' (expected istd|aistd)");
}

std::string_view to_string(Split split) { return split == Split::Train ? "train" : "test"; }
std::string_view to_string(Layout layout) { return layout == Layout::Istd ? "istd" : "aistd"; }

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool all_alnum(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
  });
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".tif" || ext == ".tiff";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_image_file(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<fs::path> find_by_stem(const std::map<std::string, fs::path>& index, const std::string& stem) {
  auto it = index.find(stem);
  if (it == index.end()) return std::nullopt;
  return it->second;
}

std::map<std::string, fs::path> index_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (auto& p : list_images(dir)) out.emplace(p.stem().string(), p);
  return out;
}

}  // namespace

std::optional<std::string> scene_id_from_stem(std::string_view stem) {
  auto dash = stem.find('-');
  if (dash == std::string_view::npos) return std::nullopt;
  auto scene = stem.substr(0, dash);
  auto variant = stem.substr(dash + 1);
  if (!all_alnum(scene) || !all_digits(variant)) return std::nullopt;
  return std::string(scene);
}

bool scene_less(const std::string& a, const std::string& b) {
  if (all_digits(a) && all_digits(b)) {
    auto strip = [](const std::string& s) {
      auto i = s.find_first_not_of('0');
      return i == std::string::npos ? std::string("0") : s.substr(i);
    };
    auto sa = strip(a), sb = strip(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
  }
  return a < b;
}

DatasetManifest::DatasetManifest(fs::path root, Split split, std::vector<ManifestRecord> records)
    : root_(std::move(root)), split_(split), records_(std::move(records)) {
  if (records_.empty()) fail(ErrorKind::Data, "manifest for " + root_.string() + " has no records");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (!ids.insert(r.image_id).second) fail(ErrorKind::Data, "duplicate image id '" + r.image_id + "'");
    if (!fs::exists(r.shadow_path)) fail(ErrorKind::Data, "missing shadow image " + r.shadow_path.string());
    if (r.mask_path && !fs::exists(*r.mask_path)) fail(ErrorKind::Data, "missing mask " + r.mask_path->string());
    if (r.free_path && !fs::exists(*r.free_path)) fail(ErrorKind::Data, "missing shadow-free image " + r.free_path->string());
    if (split_ == Split::Test && (!r.mask_path || !r.free_path)) {
      fail(ErrorKind::Data, "test record '" + r.image_id + "' lacks a ground-truth mask or shadow-free image");
    }
    auto [it, inserted] = members_.try_emplace(r.scene_id);
    if (inserted) scene_ids_.push_back(r.scene_id);
    it->second.push_back(i);
  }
  std::sort(scene_ids_.begin(), scene_ids_.end(), scene_less);
}

const std::vector<std::size_t>& DatasetManifest::scene_members(const std::string& scene) const {
  auto it = members_.find(scene);
  if (it == members_.end()) fail(ErrorKind::Data, "unknown scene '" + scene + "'");
  return it->second;
}

DatasetManifest DatasetManifest::subset(std::span<const std::string> scenes) const {
  std::set<std::string> keep(scenes.begin(), scenes.end());
  std::vector<ManifestRecord> out;
  for (const auto& r : records_) {
    if (keep.count(r.scene_id)) out.push_back(r);
  }
  return DatasetManifest(root_, split_, std::move(out));
}

DatasetManifest load_manifest(const fs::path& root, Split split, Layout layout) {
  const std::string prefix(to_string(split));
  const fs::path shadow_dir = root / (prefix + "_A");
  const fs::path mask_dir = root / (prefix + "_B");
  fs::path free_dir = root / (prefix + "_C");
  if (layout == Layout::Aistd && fs::is_directory(root / (prefix + "_C_fixed_official"))) {
    free_dir = root / (prefix + "_C_fixed_official");
  }
  for (const auto& dir : {shadow_dir, mask_dir, free_dir}) {
    if (!fs::is_directory(dir)) fail(ErrorKind::Config, "missing dataset directory " + dir.string());
  }

  const auto masks = index_by_stem(mask_dir);
  const auto frees = index_by_stem(free_dir);

  std::vector<ManifestRecord> records;
  std::vector<std::string> bad;
  for (const auto& path : list_images(shadow_dir)) {
    const std::string stem = path.stem().string();
    auto scene = scene_id_from_stem(stem);
    if (!scene) {
      bad.push_back(path.filename().string());
      continue;
    }
    records.push_back({*scene, stem, path, find_by_stem(masks, stem), find_by_stem(frees, stem)});
  }
  if (!bad.empty()) {
    std::string list;
    for (const auto& b : bad) list += (list.empty() ? "" : ", ") + b;
    fail(ErrorKind::Data, "file names not of the form <scene>-<variant>: " + list);
  }
  if (records.empty()) fail(ErrorKind::Data, "no images found in " + shadow_dir.string());
  return DatasetManifest(root, split, std::move(records));
}

void write_manifest(std::ostream& out, const DatasetManifest& manifest) {
  for (const auto& r : manifest.records()) {
    out << r.scene_id << '\t' << r.shadow_path.string() << '\t' << (r.mask_path ? r.mask_path->string() : "")
        << '\t' << (r.free_path ? r.free_path->string() : "") << '\n';
  }
}

std::pair<DatasetManifest, std::optional<DatasetManifest>> split_validation(const DatasetManifest& manifest,
                                                                            double fraction) {
  if (fraction < 0.0 || fraction >= 1.0) fail(ErrorKind::Config, "validation fraction must be in [0, 1)");
  const auto& scenes = manifest.scene_ids();
  if (fraction == 0.0) return {manifest, std::nullopt};
  std::size_t n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(scenes.size())));
  n_val = std::max<std::size_t>(n_val, 1);
  if (n_val >= scenes.size()) fail(ErrorKind::Data, "too few scenes to hold out a validation slice");
  std::vector<std::string> train(scenes.begin(), scenes.end() - static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::string> val(scenes.end() - static_cast<std::ptrdiff_t>(n_val), scenes.end());
  return {manifest.subset(train), manifest.subset(val)};
}

std::size_t expected_pair_count(const DatasetManifest& manifest) {
  std::size_t total = 0;
  for (const auto& scene : manifest.scene_ids()) {
    std::size_t n = manifest.scene_members(scene).size();
    total += n * (n - 1) / 2;
  }
  return total;
}

std::vector<ScenePair> build_training_pairs(const DatasetManifest& manifest, std::uint64_t seed) {
  std::vector<ScenePair> pairs;
  pairs.reserve(expected_pair_count(manifest));
  for (const auto& scene : manifest.scene_ids()) {
    const auto& members = manifest.scene_members(scene);
    for (std::size_t i = 0; i < members.size(); ++i) {
      for (std::size_t j = i + 1; j < members.size(); ++j) pairs.push_back({scene, members[i], members[j]});
    }
  }
  if (pairs.empty()) fail(ErrorKind::Data, "no scene has two or more images; cannot form training pairs");
  Rng rng = Rng::for_counter(seed, streams::kPairOrder, 0);
  rng.shuffle(std::span<ScenePair>(pairs));
  return pairs;
}

std::vector<ReferenceEntry> reference_pool_from_manifest(const DatasetManifest& manifest) {
  std::vector<ReferenceEntry> pool;
  std::set<std::string> seen;
  for (const auto& r : manifest.records()) {
    if (r.free_path && seen.insert(r.free_path->string()).second) pool.push_back({r.image_id, *r.free_path});
  }
  return pool;
}

std::vector<ReferenceEntry> reference_pool_from_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Config, "reference directory not found: " + dir.string());
  std::vector<ReferenceEntry> pool;
  for (auto& p : list_images(dir)) pool.push_back({p.stem().string(), p});
  return pool;
}

const ReferenceEntry& sample_reference(std::span<const ReferenceEntry> pool, Rng& rng) {
  if (pool.empty()) fail(ErrorKind::Data, "reference pool is empty");
  return pool[static_cast<std::size_t>(rng.uniform_index(pool.size()))];
}

std::size_t sample_identity_input(const DatasetManifest& manifest, std::string_view excluded_scene, Rng& rng) {
  std::vector<std::size_t> candidates;
  const auto records = manifest.records();
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].free_path && records[i].scene_id != excluded_scene) candidates.push_back(i);
  }
  if (candidates.empty()) {
    fail(ErrorKind::Data, "no shadow-free image outside scene '" + std::string(excluded_scene) + "'");
  }
  return candidates[static_cast<std::size_t>(rng.uniform_index(candidates.size()))];
}

ImageCache::ImageCache(std::optional<ImageSize> resize, std::size_t max_bytes)
    : resize_(resize), max_bytes_(max_bytes) {}

torch::Tensor ImageCache::load(const fs::path& path) {
  const std::string key = path.string();
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  auto t = load_image_tensor(path, resize_);
  const std::size_t bytes = static_cast<std::size_t>(t.numel()) * sizeof(float);
  if (used_bytes_ + bytes <= max_bytes_) {
    cache_.emplace(key, t);
    used_bytes_ += bytes;
  }
  return t;
}

}  // namespace deshadow
