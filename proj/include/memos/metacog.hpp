#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "nlohmann/json.hpp"

#include "memos/maxent.hpp"
#include "memos/seg_model.hpp"

namespace memos {

enum class ClassEncoding {
  kScaledIndex,  // one channel, argmax index / (K-1)
  kOneHot,       // K channels
};

struct MetacogFeatureConfig {
  ClassEncoding encoding = ClassEncoding::kScaledIndex;
  bool normalize_entropy = true;  // entropy / ln K; false keeps raw nats
};

// The stacked per-pixel summary of the segmentation output that the
// metacognitive net judges: predicted-class encoding plus entropy, nothing
// from the image itself.
struct MetacogInput {
  int h = 0, w = 0, channels = 0;
  std::vector<double> v;  // channel-major: v[(c*h + y)*w + x]

  double& at(int c, int y, int x) { return v[(static_cast<size_t>(c) * h + y) * w + x]; }
  double at(int c, int y, int x) const { return v[(static_cast<size_t>(c) * h + y) * w + x]; }
};

// Default encoding: channel 0 = predicted index / (K-1), channel 1 =
// entropy / ln K; both land in [0,1]. K=1 has no segmentation problem and
// throws ConfigError.
MetacogInput build_metacog_input(const ProbabilityMap& probs,
                                 const MetacogFeatureConfig& fc = {});

struct MetacogTarget {
  LabelMap target;     // 1 = backbone got the pixel wrong
  LabelMap loss_mask;  // 0 on ignore pixels
};

// Per-pixel correctness targets: 1 where pred != gt and gt is supervised.
MetacogTarget build_target_mask(const LabelMap& pred_ids, const LabelMap& gt_ids,
                                const ClassTaxonomy& tax);

struct SoftOODMask {
  int h = 0, w = 0;
  std::vector<double> v;  // in [0,1]

  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

struct MetacogModelConfig {
  int depth = 3;
  int base_width = 10;
  uint64_t seed = 0;
  int num_classes = 0;  // backbone K; fixes input channels and normalization
  MetacogFeatureConfig features;
};

// U-shaped correctness predictor over MetacogInput, single sigmoid-squashed
// output channel.
class MetacogModel {
 public:
  explicit MetacogModel(const MetacogModelConfig& cfg);

  Tensor forward(const Tensor& x, bool train) { return net_.forward(x, train); }
  Tensor backward(const Tensor& dlogits) { return net_.backward(dlogits); }
  Tensor forward_padded(const Tensor& x) { return net_.forward_padded(x); }

  std::vector<nn::Param> params() { return net_.params(); }
  const MetacogModelConfig& config() const { return cfg_; }
  int input_channels() const;

 private:
  MetacogModelConfig cfg_;
  nn::UNet net_;
};

Tensor metacog_inputs_to_tensor(const std::vector<const MetacogInput*>& inputs);

// Sigmoid of item `item` of a {N,1,H,W} logit tensor.
SoftOODMask sigmoid_mask(const Tensor& logits, int item = 0);

// Numerically stable masked binary cross-entropy on logits; mean over
// mask=1 pixels. All-masked batches are degenerate (TrainingError). dlogits,
// when given, receives the gradient of the mean.
double masked_bce(const Tensor& logits, const std::vector<LabelMap>& targets,
                  const std::vector<LabelMap>& masks, Tensor* dlogits = nullptr);

struct MetacogTrainResult {
  std::vector<double> train_bce;  // per epoch
  int skipped_samples = 0;        // all-ignore samples dropped with a warning
};

// Trains the correctness predictor against a frozen backbone: inputs and
// targets are computed once from the backbone's predictions on the subset,
// then the metacog net alone is optimized with masked BCE. Writes the
// checkpoint and loss_curve.csv under out_dir.
MetacogTrainResult train_metacog(MetacogModel& model, SegModel& backbone,
                                 const std::vector<LabeledImage>& subset, const ClassTaxonomy& tax,
                                 const TrainHyperparams& hp, const std::filesystem::path& out_dir,
                                 const nlohmann::json& extra_meta = {}, std::ostream* log = nullptr);

// Full inference pipeline: backbone forward -> softmax -> metacog input ->
// metacog forward -> sigmoid. Checkpoints with different K throw
// CompatibilityError.
SoftOODMask infer_ood_mask(MetacogModel& metacog, SegModel& backbone, const ImageU8& image);

nlohmann::json metacog_config_to_json(const MetacogModelConfig& cfg);
MetacogModelConfig metacog_config_from_json(const nlohmann::json& j);
MetacogModel load_metacog_model(const std::filesystem::path& ckpt_dir);

}  // namespace memos
