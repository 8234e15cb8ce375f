#include "memos/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cstdio>
#include <cstring>

#include "memos/errors.hpp"

namespace memos {

namespace fs = std::filesystem;

void write_png(const fs::path& path, const ImageU8& img) {
  cv::Mat m(img.h, img.w, CV_8UC3);
  for (int y = 0; y < img.h; ++y) {
    auto* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < img.w; ++x) {
      // OpenCV stores BGR.
      row[x * 3 + 0] = img.at(y, x, 2);
      row[x * 3 + 1] = img.at(y, x, 1);
      row[x * 3 + 2] = img.at(y, x, 0);
    }
  }
  fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m))
    throw LoadError("failed to write " + path.string());
}

void write_png(const fs::path& path, const LabelMap& map) {
  cv::Mat m(map.h, map.w, CV_8UC1);
  for (int y = 0; y < map.h; ++y)
    std::memcpy(m.ptr<uint8_t>(y), &map.v[static_cast<size_t>(y) * map.w], map.w);
  fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m))
    throw LoadError("failed to write " + path.string());
}

ImageU8 read_png_rgb(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw LoadError("failed to read image " + path.string());
  ImageU8 img(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      img.at(y, x, 0) = row[x * 3 + 2];
      img.at(y, x, 1) = row[x * 3 + 1];
      img.at(y, x, 2) = row[x * 3 + 0];
    }
  }
  return img;
}

LabelMap read_png_gray(const fs::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw LoadError("failed to read label map " + path.string());
  LabelMap map(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y)
    std::memcpy(&map.v[static_cast<size_t>(y) * map.w], m.ptr<uint8_t>(y), map.w);
  return map;
}

namespace {

void write_npy_raw(const fs::path& path, const void* data, size_t elem_size,
                   const char* dtype, int h, int w) {
  std::string header = "{'descr': '" + std::string(dtype) +
                       "', 'fortran_order': False, 'shape': (" +
                       std::to_string(h) + ", " + std::to_string(w) + "), }";
  // Pad so that magic + header is a multiple of 64 bytes, per the format spec.
  size_t unpadded = 10 + header.size() + 1;
  size_t pad = (64 - unpadded % 64) % 64;
  header.append(pad, ' ');
  header.push_back('\n');

  fs::create_directories(path.parent_path());
  FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw LoadError("failed to open " + path.string());
  const uint8_t magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  const uint16_t hlen = static_cast<uint16_t>(header.size());
  std::fwrite(magic, 1, 8, f);
  std::fwrite(&hlen, 2, 1, f);
  std::fwrite(header.data(), 1, header.size(), f);
  std::fwrite(data, elem_size, static_cast<size_t>(h) * w, f);
  std::fclose(f);
}

}  // namespace

void write_npy(const fs::path& path, const std::vector<double>& data, int h, int w) {
  write_npy_raw(path, data.data(), sizeof(double), "<f8", h, w);
}

void write_npy(const fs::path& path, const std::vector<float>& data, int h, int w) {
  write_npy_raw(path, data.data(), sizeof(float), "<f4", h, w);
}

}  // namespace memos
