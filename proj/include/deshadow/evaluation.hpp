#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <opencv2/core.hpp>

#include "deshadow/dataset.hpp"
#include "deshadow/lab.hpp"

namespace deshadow {

inline constexpr const char* kMetricDefinition = "MAE in CIELAB";

/// Which pixels of a region mask take part.
enum class Region { All, Shadow, NonShadow };

/// Mean over the selected pixels and the three Lab channels of |pred - gt|.
/// `mask` is CV_8U with non-zero = shadow; it may be empty for Region::All.
/// Returns nullopt for an empty region.
std::optional<double> region_mae(const cv::Mat& pred_lab, const cv::Mat& gt_lab, const cv::Mat& mask,
                                 Region region);

/// Sums behind one image's metrics, kept so aggregates can be re-derived.
struct ImageMetrics {
  std::string image_id;
  double all = 0.0;
  std::optional<double> shadow;
  std::optional<double> nonshadow;
  std::int64_t shadow_pixels = 0;
  std::int64_t total_pixels = 0;
  double abs_sum_shadow = 0.0;     // Σ |Δ| over shadow pixels and channels
  double abs_sum_nonshadow = 0.0;
};

/// Lab errors of one prediction against its ground truth. Ground-truth mask
/// values above 127 count as shadow. Sizes must agree exactly.
ImageMetrics evaluate_image(const std::string& image_id, const cv::Mat& pred_bgr8, const cv::Mat& gt_bgr8,
                            const cv::Mat& mask8);

struct Aggregate {
  double all = 0.0;
  std::optional<double> shadow;
  std::optional<double> nonshadow;
};

/// Aggregates are labelled `rmse_*` for comparability with published tables;
/// the quantity is the mean absolute error, see `metric_definition`.
struct EvalReport {
  double rmse_all = 0.0;
  std::optional<double> rmse_shadow;
  std::optional<double> rmse_nonshadow;
  std::size_t image_count = 0;
  /// Same quantities pooled over pixels instead of averaged per image.
  Aggregate pixel_weighted;
  std::vector<ImageMetrics> images;

  nlohmann::ordered_json to_json() const;
};

/// Unweighted mean of per-image values; S and N skip images where the region
/// is empty.
EvalReport aggregate(std::vector<ImageMetrics> images);

/// Supplies 8-bit BGR predictions per test record.
struct PredictionSource {
  std::function<bool(const ManifestRecord&)> available;
  std::function<cv::Mat(const ManifestRecord&)> load;
};

/// Predictions stored as `<dir>/<image_id>.<ext>` (png, jpg, bmp, tif).
PredictionSource predictions_from_directory(const std::filesystem::path& dir);

/// Runs the protocol over every record. Missing predictions are reported
/// together before any metric work. `threads` > 1 spreads images over
/// workers; the result does not depend on the thread count.
EvalReport evaluate(const DatasetManifest& manifest, const PredictionSource& source, int threads = 1);

}  // namespace deshadow
