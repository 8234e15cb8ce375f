#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "memos/dataset.hpp"

namespace memos {

struct BlurParams {
  double sigma = 0.0;
  int kernel_size = 0;
};

// sigma <= 0 or kernel_size <= 0 select the resolution-scaled defaults:
// sigma = max(H,W)/40, kernel = next odd >= 6*sigma.
BlurParams resolve_blur_params(int height, int width, double sigma, int kernel_size);

struct SynthConfig {
  int subset_size = 0;    // |C_sub|, retained ID classes
  int sample_count = 0;   // images drawn into D_sub
  double blur_sigma = 0;  // 0 = auto
  int kernel_size = 0;    // 0 = auto; must be odd and >= 3 otherwise
  uint64_t seed = 0;
};

// A copy of a source sample whose non-retained-class pixels were blurred
// beyond recognition. Retained pixels stay bit-identical to the source;
// synth_mask is 1 exactly where the blur was composited in.
struct SynthesizedSample {
  std::string id;
  std::string source_id;
  ImageU8 image;
  LabelMap labels;     // original labels, retained for bookkeeping
  LabelMap synth_mask;
};

struct SynthDataset {
  std::vector<SynthesizedSample> samples;
  std::vector<int> c_sub;  // sorted retained class ids
  BlurParams blur;
  uint64_t seed = 0;
};

// Separable Gaussian blur over the full RGB image (reflect-101 borders),
// rounded back to 8 bits.
ImageU8 gaussian_blur_rgb(const ImageU8& src, const BlurParams& p);

// Uniform seed-deterministic draw of the retained class subset. One draw per
// run; every synthesized sample shares it.
std::vector<int> select_class_subset(const ClassTaxonomy& taxonomy, int subset_size,
                                     uint64_t seed);

// Blur composited onto exactly the pixels whose label is outside c_sub and
// not ignore. The blur is computed over the whole image first, so blurred
// regions mix neighboring in-distribution content.
SynthesizedSample blur_out_classes(const LabeledImage& sample, const std::vector<int>& c_sub,
                                   int ignore_id, const BlurParams& p);

// Draws sample_count images uniformly without replacement from d_id and
// synthesizes each. Pure function of (d_id, taxonomy, config).
SynthDataset build_synth_dataset(const std::vector<LabeledImage>& d_id,
                                 const ClassTaxonomy& taxonomy, const SynthConfig& cfg);

// On-disk: data-core layout under split "synth" plus synth_ood/<id>.png masks
// and synth_manifest.json recording C_sub, blur params and source ids.
void save_synth_dataset(const std::filesystem::path& root, const SynthDataset& ds,
                        const ClassTaxonomy& taxonomy);
SynthDataset load_synth_dataset(const std::filesystem::path& root);

}  // namespace memos
