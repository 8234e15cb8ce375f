#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace memos {

// Interleaved 8-bit RGB image.
struct ImageU8 {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> rgb;  // h*w*3

  ImageU8() = default;
  ImageU8(int height, int width) : h(height), w(width), rgb(static_cast<size_t>(height) * width * 3, 0) {}

  uint8_t& at(int y, int x, int c) { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  uint8_t at(int y, int x, int c) const { return rgb[(static_cast<size_t>(y) * w + x) * 3 + c]; }
};

// Single-channel 8-bit map; used for class labels, OOD ground truth and
// synthetic-OOD masks.
struct LabelMap {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> v;  // h*w

  LabelMap() = default;
  LabelMap(int height, int width, uint8_t fill = 0)
      : h(height), w(width), v(static_cast<size_t>(height) * width, fill) {}

  uint8_t& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

// PNG I/O (8-bit, lossless). Throws LoadError on failure.
void write_png(const std::filesystem::path& path, const ImageU8& img);
void write_png(const std::filesystem::path& path, const LabelMap& map);
ImageU8 read_png_rgb(const std::filesystem::path& path);
LabelMap read_png_gray(const std::filesystem::path& path);

// Minimal .npy writers for lossless float exports (numpy format v1.0).
void write_npy(const std::filesystem::path& path, const std::vector<double>& data, int h, int w);
void write_npy(const std::filesystem::path& path, const std::vector<float>& data, int h, int w);

}  // namespace memos
