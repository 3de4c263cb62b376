#include "deshadow/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "deshadow/error.hpp"
#include "deshadow/image.hpp"

namespace fs = std::filesystem;

namespace deshadow {

namespace {

bool selected(const cv::Mat& mask, int y, int x, Region region) {
  if (region == Region::All) return true;
  const bool shadow = mask.at<std::uint8_t>(y, x) != 0;
  return region == Region::Shadow ? shadow : !shadow;
}

}  // namespace

std::optional<double> region_mae(const cv::Mat& pred_lab, const cv::Mat& gt_lab, const cv::Mat& mask,
                                 Region region) {
  if (pred_lab.size() != gt_lab.size() || pred_lab.type() != CV_64FC3 || gt_lab.type() != CV_64FC3) {
    fail(ErrorKind::Shape, "region_mae: Lab images must be CV_64FC3 of equal size");
  }
  if (region != Region::All && (mask.size() != pred_lab.size() || mask.type() != CV_8U)) {
    fail(ErrorKind::Shape, "region_mae: mask must be CV_8U of the image size");
  }
  double sum = 0.0;
  std::int64_t count = 0;
  for (int y = 0; y < pred_lab.rows; ++y) {
    const auto* p = pred_lab.ptr<cv::Vec3d>(y);
    const auto* g = gt_lab.ptr<cv::Vec3d>(y);
    for (int x = 0; x < pred_lab.cols; ++x) {
      if (!selected(mask, y, x, region)) continue;
      sum += std::abs(p[x][0] - g[x][0]) + std::abs(p[x][1] - g[x][1]) + std::abs(p[x][2] - g[x][2]);
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / (3.0 * static_cast<double>(count));
}

ImageMetrics evaluate_image(const std::string& image_id, const cv::Mat& pred_bgr8, const cv::Mat& gt_bgr8,
                            const cv::Mat& mask8) {
  if (pred_bgr8.size() != gt_bgr8.size() || mask8.size() != gt_bgr8.size()) {
    fail(ErrorKind::Shape, "image '" + image_id + "': prediction, ground truth and mask sizes differ");
  }
  const cv::Mat pred = rgb_to_lab(pred_bgr8);
  const cv::Mat gt = rgb_to_lab(gt_bgr8);
  cv::Mat mask;
  cv::compare(mask8, 127, mask, cv::CMP_GT);

  ImageMetrics m;
  m.image_id = image_id;
  m.total_pixels = static_cast<std::int64_t>(gt.total());
  m.shadow_pixels = cv::countNonZero(mask);
  for (int y = 0; y < gt.rows; ++y) {
    const auto* p = pred.ptr<cv::Vec3d>(y);
    const auto* g = gt.ptr<cv::Vec3d>(y);
    const auto* s = mask.ptr<std::uint8_t>(y);
    for (int x = 0; x < gt.cols; ++x) {
      const double d = std::abs(p[x][0] - g[x][0]) + std::abs(p[x][1] - g[x][1]) + std::abs(p[x][2] - g[x][2]);
      (s[x] ? m.abs_sum_shadow : m.abs_sum_nonshadow) += d;
    }
  }
  m.all = *region_mae(pred, gt, mask, Region::All);
  m.shadow = region_mae(pred, gt, mask, Region::Shadow);
  m.nonshadow = region_mae(pred, gt, mask, Region::NonShadow);
  return m;
}

EvalReport aggregate(std::vector<ImageMetrics> images) {
  EvalReport r;
  r.image_count = images.size();
  if (images.empty()) fail(ErrorKind::Data, "no images to aggregate");
  double sum_all = 0.0, sum_s = 0.0, sum_n = 0.0;
  std::size_t n_s = 0, n_n = 0;
  double pix_s = 0.0, pix_n = 0.0, abs_s = 0.0, abs_n = 0.0;
  for (const auto& m : images) {
    sum_all += m.all;
    if (m.shadow) {
      sum_s += *m.shadow;
      ++n_s;
    }
    if (m.nonshadow) {
      sum_n += *m.nonshadow;
      ++n_n;
    }
    pix_s += static_cast<double>(m.shadow_pixels);
    pix_n += static_cast<double>(m.total_pixels - m.shadow_pixels);
    abs_s += m.abs_sum_shadow;
    abs_n += m.abs_sum_nonshadow;
  }
  r.rmse_all = sum_all / static_cast<double>(images.size());
  if (n_s) r.rmse_shadow = sum_s / static_cast<double>(n_s);
  if (n_n) r.rmse_nonshadow = sum_n / static_cast<double>(n_n);
  r.pixel_weighted.all = (abs_s + abs_n) / (3.0 * (pix_s + pix_n));
  if (pix_s > 0) r.pixel_weighted.shadow = abs_s / (3.0 * pix_s);
  if (pix_n > 0) r.pixel_weighted.nonshadow = abs_n / (3.0 * pix_n);
  r.images = std::move(images);
  return r;
}

nlohmann::ordered_json EvalReport::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(); };
  nlohmann::ordered_json j;
  j["metric_definition"] = kMetricDefinition;
  j["aggregation"] = "unweighted mean of per-image values";
  j["rmse_all"] = rmse_all;
  j["rmse_shadow"] = opt(rmse_shadow);
  j["rmse_nonshadow"] = opt(rmse_nonshadow);
  j["image_count"] = image_count;
  j["pixel_weighted"] = {{"rmse_all", pixel_weighted.all},
                         {"rmse_shadow", opt(pixel_weighted.shadow)},
                         {"rmse_nonshadow", opt(pixel_weighted.nonshadow)}};
  auto rows = nlohmann::ordered_json::array();
  for (const auto& m : images) {
    rows.push_back({{"id", m.image_id},
                    {"A", m.all},
                    {"S", opt(m.shadow)},
                    {"N", opt(m.nonshadow)},
                    {"shadow_pixels", m.shadow_pixels}});
  }
  j["images"] = rows;
  return j;
}

PredictionSource predictions_from_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Config, "prediction directory not found: " + dir.string());
  auto find = [dir](const ManifestRecord& r) -> std::optional<fs::path> {
    for (const char* ext : {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}) {
      fs::path p = dir / (r.image_id + ext);
      if (fs::exists(p)) return p;
    }
    return std::nullopt;
  };
  PredictionSource source;
  source.available = [find](const ManifestRecord& r) { return find(r).has_value(); };
  source.load = [find](const ManifestRecord& r) {
    auto p = find(r);
    if (!p) fail(ErrorKind::Data, "missing prediction for " + r.image_id);
    return read_rgb8(*p);
  };
  return source;
}

EvalReport evaluate(const DatasetManifest& manifest, const PredictionSource& source, int threads) {
  const auto records = manifest.records();
  std::string missing;
  for (const auto& r : records) {
    if (!r.mask_path || !r.free_path) fail(ErrorKind::Data, "record '" + r.image_id + "' lacks ground truth");
    if (!source.available(r)) missing += (missing.empty() ? "" : ", ") + r.image_id;
  }
  if (!missing.empty()) fail(ErrorKind::Data, "missing predictions for: " + missing);

  std::vector<ImageMetrics> results(records.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        const auto& r = records[i];
        results[i] = evaluate_image(r.image_id, source.load(r), read_rgb8(*r.free_path), read_grey8(*r.mask_path));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(records.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);
  return aggregate(std::move(results));
}

}  // namespace deshadow
