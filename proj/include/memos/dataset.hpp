#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memos/image.hpp"
#include "memos/taxonomy.hpp"

namespace memos {

// One RGB sample with its per-pixel class labels and, when the sample comes
// from an OOD evaluation split, per-pixel OOD ground truth (0=ID, 1=OOD,
// ignore_id elsewhere).
struct LabeledImage {
  std::string id;
  ImageU8 image;
  LabelMap labels;
  std::optional<LabelMap> ood;
};

struct DatasetManifest {
  ClassTaxonomy taxonomy;
  std::map<std::string, std::vector<std::string>> splits;
  uint64_t seed = 0;
  std::string provenance;
};

// On-disk layout:
//   root/manifest.json
//   root/images/<split>/<id>.png        (RGB, 8-bit)
//   root/labels/<split>/<id>.png        (single channel, value = class id, 255 = ignore)
//   root/ood_labels/<split>/<id>.png    (optional)
void save_manifest(const std::filesystem::path& root, const DatasetManifest& m);
DatasetManifest load_manifest(const std::filesystem::path& root);

void save_sample(const std::filesystem::path& root, const std::string& split, const LabeledImage& s);

// Loads a split in lexicographic id order; validates every sample against the
// taxonomy. Throws LoadError / ValidationError naming the offending sample.
std::vector<LabeledImage> load_dataset(const std::filesystem::path& root, const std::string& split);

struct ValidationReport {
  std::vector<std::string> violations;
  bool clean() const { return violations.empty(); }
};

// Non-throwing dataset check; every problem becomes one report line.
ValidationReport validate_dataset(const std::filesystem::path& root);

}  // namespace memos
