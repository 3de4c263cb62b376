#include "synthetic.hpp"

#include <cmath>
#include <random>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace deshadow::testing {

namespace fs = std::filesystem;

namespace {

cv::Mat background(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(40.0, 220.0);
  const cv::Vec3d top_left(u(rng), u(rng), u(rng)), bottom_right(u(rng), u(rng), u(rng));
  cv::Mat img(h, w, CV_8UC3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double t = 0.5 * (static_cast<double>(y) / (h - 1) + static_cast<double>(x) / (w - 1));
      const cv::Vec3d c = top_left * (1.0 - t) + bottom_right * t;
      img.at<cv::Vec3b>(y, x) = cv::Vec3b(cv::saturate_cast<uchar>(c[0]), cv::saturate_cast<uchar>(c[1]),
                                          cv::saturate_cast<uchar>(c[2]));
    }
  }
  std::uniform_int_distribution<int> px(0, w - 1), py(0, h - 1), size(3, std::max(4, h / 4));
  for (int i = 0; i < 3; ++i) {
    const cv::Scalar colour(u(rng), u(rng), u(rng));
    if (i % 2 == 0)
      cv::rectangle(img, cv::Rect(px(rng), py(rng), size(rng), size(rng)), colour, cv::FILLED);
    else
      cv::circle(img, cv::Point(px(rng), py(rng)), size(rng), colour, cv::FILLED);
  }
  return img;
}

cv::Mat shadow_mask(int h, int w, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> cx(w / 5, 4 * w / 5), cy(h / 5, 4 * h / 5);
  std::uniform_int_distribution<int> ax(w / 8, w / 3), ay(h / 8, h / 3), angle(0, 179);
  cv::Mat mask = cv::Mat::zeros(h, w, CV_8UC1);
  cv::ellipse(mask, cv::Point(cx(rng), cy(rng)), cv::Size(ax(rng), ay(rng)), angle(rng), 0, 360, cv::Scalar(255),
              cv::FILLED);
  return mask;
}

}  // namespace

void write_synthetic_dataset(const fs::path& root, const SyntheticSpec& spec) {
  const fs::path dir_a = root / (spec.split + "_A"), dir_b = root / (spec.split + "_B"),
                 dir_c = root / (spec.split + "_C");
  for (const auto& d : {dir_a, dir_b, dir_c}) fs::create_directories(d);
  std::mt19937_64 rng(spec.seed);
  for (int s = 0; s < spec.scenes; ++s) {
    const cv::Mat free = background(spec.height, spec.width, rng);
    for (int v = 1; v <= spec.variants_per_scene; ++v) {
      const std::string name = std::to_string(spec.first_scene + s) + "-" + std::to_string(v) + ".png";
      const cv::Mat mask = shadow_mask(spec.height, spec.width, rng);
      cv::Mat shadow = free.clone();
      for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
          if (mask.at<uchar>(y, x) == 0) continue;
          auto& p = shadow.at<cv::Vec3b>(y, x);
          for (int c = 0; c < 3; ++c) p[c] = static_cast<uchar>(std::lround(p[c] * spec.attenuation));
        }
      }
      cv::imwrite((dir_a / name).string(), shadow);
      cv::imwrite((dir_b / name).string(), mask);
      cv::imwrite((dir_c / name).string(), free);
    }
  }
}

}  // namespace deshadow::testing
