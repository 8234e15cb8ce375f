#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "memos/dataset.hpp"

namespace memos {

struct ToySplitSpec {
  std::string name;
  int count = 0;
  bool ood_mode = false;  // inject one held-out-appearance shape per image
};

// Procedural scene generator standing in for a real street-scene corpus:
// textured background (class 0) plus 2-6 shape instances of distinct
// classes. All pixel values derive from seeded integer arithmetic, so the
// same config produces byte-identical files on any platform.
struct ToySceneConfig {
  int height = 64;
  int width = 64;
  int num_classes = 8;
  uint64_t seed = 0;
  // Per-instance appearance drift in [0,1]. Each shape blends its class color
  // toward another class's color by a random per-instance amount (bimodal:
  // most instances drift a little, a minority drift nearly all the way) and
  // takes a brightness offset. 0 keeps classes perfectly separable; higher
  // values make a segmentation net misread occasional whole instances — the
  // blob-shaped errors real backbones make.
  double ambiguity = 0.0;
  std::vector<ToySplitSpec> splits;
};

constexpr int kToyPaletteCapacity = 16;

DatasetManifest generate_toy_scenes(const std::filesystem::path& root, const ToySceneConfig& cfg);

// Single-split convenience used by tests and the python bindings.
DatasetManifest generate_toy_scenes(const std::filesystem::path& root, int num_images,
                                    int height, int width, int num_classes,
                                    uint64_t seed, bool ood_mode,
                                    const std::string& split = "train");

}  // namespace memos
