#include "memos/plots.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "memos/errors.hpp"

namespace memos {
namespace {

constexpr int kW = 720, kH = 480;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 50, kMarginB = 50;

const cv::Scalar kColors[] = {
    {180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214}, {189, 103, 148}, {75, 86, 140},
};
constexpr size_t kNumColors = sizeof(kColors) / sizeof(kColors[0]);

cv::Mat blank_canvas(const std::string& title) {
  cv::Mat img(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::putText(img, title, {kMarginL, 30}, cv::FONT_HERSHEY_SIMPLEX, 0.6, {30, 30, 30}, 1,
              cv::LINE_AA);
  cv::rectangle(img, {kMarginL, kMarginT}, {kW - kMarginR, kH - kMarginB}, {120, 120, 120}, 1);
  return img;
}

void save(const cv::Mat& img, const std::filesystem::path& path) {
  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), img)) throw LoadError("cannot write plot: " + path.string());
}

void legend(cv::Mat& img, const std::vector<std::string>& labels) {
  int y = kMarginT + 18;
  for (size_t i = 0; i < labels.size(); ++i) {
    const cv::Scalar& c = kColors[i % kNumColors];
    cv::line(img, {kW - kMarginR - 150, y - 4}, {kW - kMarginR - 125, y - 4}, c, 2, cv::LINE_AA);
    cv::putText(img, labels[i], {kW - kMarginR - 118, y}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                {30, 30, 30}, 1, cv::LINE_AA);
    y += 18;
  }
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

void plot_histogram(const std::filesystem::path& path, const std::string& title, double lo,
                    double hi,
                    const std::vector<std::pair<std::string, std::vector<int64_t>>>& series) {
  cv::Mat img = blank_canvas(title);
  int64_t peak = 1;
  for (const auto& [label, counts] : series)
    for (int64_t c : counts) peak = std::max(peak, c);

  const int plot_w = kW - kMarginL - kMarginR, plot_h = kH - kMarginT - kMarginB;
  std::vector<std::string> labels;
  for (size_t si = 0; si < series.size(); ++si) {
    const std::vector<int64_t>& counts = series[si].second;
    labels.push_back(series[si].first);
    if (counts.empty()) continue;
    std::vector<cv::Point> steps;
    for (size_t b = 0; b <= counts.size(); ++b) {
      const int x = kMarginL + static_cast<int>(static_cast<double>(b) / counts.size() * plot_w);
      const int64_t c = counts[std::min(b, counts.size() - 1)];
      const int y = kH - kMarginB -
                    static_cast<int>(static_cast<double>(c) / static_cast<double>(peak) * plot_h);
      if (b > 0) steps.emplace_back(x, steps.back().y);  // horizontal run of the previous bin
      steps.emplace_back(x, y);
    }
    cv::polylines(img, steps, false, kColors[si % kNumColors], 2, cv::LINE_AA);
  }
  legend(img, labels);
  cv::putText(img, fmt(lo), {kMarginL - 10, kH - kMarginB + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
              {30, 30, 30}, 1, cv::LINE_AA);
  cv::putText(img, fmt(hi), {kW - kMarginR - 30, kH - kMarginB + 20}, cv::FONT_HERSHEY_SIMPLEX,
              0.45, {30, 30, 30}, 1, cv::LINE_AA);
  cv::putText(img, "count (peak " + std::to_string(peak) + ")", {8, kMarginT - 8},
              cv::FONT_HERSHEY_SIMPLEX, 0.45, {30, 30, 30}, 1, cv::LINE_AA);
  save(img, path);
}

void plot_pr_curve(
    const std::filesystem::path& path, const std::string& title,
    const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& curves) {
  cv::Mat img = blank_canvas(title);
  const int plot_w = kW - kMarginL - kMarginR, plot_h = kH - kMarginT - kMarginB;
  for (int g = 1; g < 4; ++g) {  // light grid every 0.25
    const int x = kMarginL + g * plot_w / 4, y = kMarginT + g * plot_h / 4;
    cv::line(img, {x, kMarginT}, {x, kH - kMarginB}, {225, 225, 225}, 1);
    cv::line(img, {kMarginL, y}, {kW - kMarginR, y}, {225, 225, 225}, 1);
  }
  std::vector<std::string> labels;
  for (size_t si = 0; si < curves.size(); ++si) {
    labels.push_back(curves[si].first);
    std::vector<cv::Point> pts;
    for (const auto& [recall, precision] : curves[si].second)
      pts.emplace_back(kMarginL + static_cast<int>(recall * plot_w),
                       kH - kMarginB - static_cast<int>(precision * plot_h));
    if (pts.size() >= 2)
      cv::polylines(img, pts, false, kColors[si % kNumColors], 2, cv::LINE_AA);
  }
  legend(img, labels);
  cv::putText(img, "recall", {kMarginL + plot_w / 2 - 20, kH - kMarginB + 25},
              cv::FONT_HERSHEY_SIMPLEX, 0.45, {30, 30, 30}, 1, cv::LINE_AA);
  cv::putText(img, "precision", {8, kMarginT - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {30, 30, 30}, 1,
              cv::LINE_AA);
  save(img, path);
}

void plot_mask_overlay(const std::filesystem::path& path, const ImageU8& image,
                       const std::vector<double>& mask) {
  if (mask.size() != static_cast<size_t>(image.h) * image.w)
    throw ShapeError("overlay mask size differs from image");
  cv::Mat img(image.h, image.w, CV_8UC3);
  for (int y = 0; y < image.h; ++y)
    for (int x = 0; x < image.w; ++x) {
      const double a = 0.6 * std::clamp(mask[static_cast<size_t>(y) * image.w + x], 0.0, 1.0);
      auto& px = img.at<cv::Vec3b>(y, x);
      px[0] = static_cast<uint8_t>(std::lround(image.at(y, x, 2) * (1.0 - a)));
      px[1] = static_cast<uint8_t>(std::lround(image.at(y, x, 1) * (1.0 - a)));
      px[2] = static_cast<uint8_t>(std::lround(image.at(y, x, 0) * (1.0 - a) + 255.0 * a));
    }
  save(img, path);
}

}  // namespace memos
