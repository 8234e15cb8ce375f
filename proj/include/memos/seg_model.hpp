#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "nlohmann/json.hpp"

#include "memos/dataset.hpp"
#include "memos/nn/unet.hpp"

namespace memos {

// Per-pixel class distribution in double precision. Probability rows are
// pixel-contiguous: v[(y*w + x)*k + c].
struct ProbabilityMap {
  int h = 0, w = 0, k = 0;
  std::vector<double> v;

  double& at(int y, int x, int c) { return v[(static_cast<size_t>(y) * w + x) * k + c]; }
  double at(int y, int x, int c) const { return v[(static_cast<size_t>(y) * w + x) * k + c]; }
  const double* row(int y, int x) const { return &v[(static_cast<size_t>(y) * w + x) * k]; }
};

struct SegModelConfig {
  int num_classes = 8;
  int input_channels = 3;
  int depth = 3;
  int base_width = 12;
  uint64_t seed = 0;
};

// Encoder–decoder segmentation net producing per-pixel class logits.
class SegModel {
 public:
  explicit SegModel(const SegModelConfig& cfg);

  // x {N, input_channels, H, W} -> logits {N, num_classes, H, W}
  Tensor forward(const Tensor& x, bool train) { return net_.forward(x, train); }
  Tensor backward(const Tensor& dlogits) { return net_.backward(dlogits); }
  Tensor forward_padded(const Tensor& x) { return net_.forward_padded(x); }

  std::vector<nn::Param> params() { return net_.params(); }
  const SegModelConfig& config() const { return cfg_; }
  int spatial_multiple() const { return net_.spatial_multiple(); }

 private:
  SegModelConfig cfg_;
  nn::UNet net_;
};

// Maps 8-bit RGB to the net's input range (px/255 - 0.5) * 2.
Tensor normalize_images(const std::vector<const ImageU8*>& images);
Tensor normalize_image(const ImageU8& image);

// Numerically stabilized softmax (max subtraction) over item `item` of a
// {N,K,H,W} logits tensor, computed in double. NaN logits -> NumericError.
ProbabilityMap softmax(const Tensor& logits, int item = 0);

// Per-pixel argmax; ties broken toward the lowest class index.
LabelMap predict_labels(const ProbabilityMap& probs);

// Taxonomy id space <-> model channel index space. ignore_id passes through;
// ood_id maps to ignore (no CE supervision); any other unknown id throws
// ValidationError.
LabelMap labels_to_indices(const LabelMap& ids, const ClassTaxonomy& tax);
LabelMap indices_to_labels(const LabelMap& indices, const ClassTaxonomy& tax);

struct TrainHyperparams {
  int epochs = 10;
  double lr = 2e-3;
  int batch = 8;
  uint64_t seed = 0;
};

struct TrainResult {
  std::vector<double> train_loss;  // per-epoch mean over batches
  std::vector<double> val_miou;    // per-epoch
  double final_val_miou = 0.0;
};

struct SegEvalResult {
  double ce = 0.0;
  double miou = 0.0;
};

// Mean masked CE and mIoU of a frozen model over a labeled split.
SegEvalResult evaluate_segmentation(SegModel& model, const std::vector<LabeledImage>& samples,
                                    const ClassTaxonomy& tax);

// Cross-entropy training over ignore-masked pixels. Writes weights.bin,
// meta.json (merged with extra_meta) and loss_curve.csv (epoch,split,loss,miou)
// under out_dir. epochs=0 saves the untouched initialization. NaN loss ->
// TrainingError naming the epoch.
TrainResult train_segmentation(SegModel& model, const std::vector<LabeledImage>& train_split,
                               const std::vector<LabeledImage>& val_split, const ClassTaxonomy& tax,
                               const TrainHyperparams& hp, const std::filesystem::path& out_dir,
                               const nlohmann::json& extra_meta = {}, std::ostream* log = nullptr);

nlohmann::json seg_config_to_json(const SegModelConfig& cfg);
SegModelConfig seg_config_from_json(const nlohmann::json& j);

// Rebuilds the model shape from the checkpoint's meta.json and loads weights.
SegModel load_seg_model(const std::filesystem::path& ckpt_dir);

}  // namespace memos
