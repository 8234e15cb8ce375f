#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "nlohmann/json.hpp"

#include "memos/seg_model.hpp"
#include "memos/synth_ood.hpp"

namespace memos {

// Per-pixel Shannon entropy in nats.
struct EntropyMap {
  int h = 0, w = 0;
  std::vector<double> v;

  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

// -sum_i p_i ln p_i with the 0*ln 0 = 0 convention, clamped into [0, ln K].
// A probability row deviating from the simplex by more than 1e-4 throws
// NumericError.
EntropyMap entropy_map(const ProbabilityMap& probs);

struct MaxEntConfig {
  double lambda = 1.0;
  int epochs = 6;
  double lr = 5e-4;
  int batch = 8;
  uint64_t seed = 0;
};

struct LossBreakdown {
  double ce_term = 0.0;      // mean CE over supervised pixels
  double maxent_term = 0.0;  // mean entropy over synth-OOD pixels
  double total = 0.0;        // ce_term - lambda * maxent_term
  int64_t ce_pixel_count = 0;
  int64_t synth_pixel_count = 0;
};

// Mixed objective over a {N,K,H,W} logits batch. `labels` hold class indices
// (0..K-1) or 255 for unsupervised pixels; `synth_masks` may be empty
// (all-zero). Pixels with synth_mask=1 never receive CE supervision; they
// feed the entropy term instead. A batch with neither CE nor synth pixels is
// degenerate and throws TrainingError. When dlogits is given it receives
// d(total)/d(logit).
LossBreakdown maxent_loss(const Tensor& logits, const std::vector<LabelMap>& labels,
                          const std::vector<LabelMap>& synth_masks, double lambda,
                          Tensor* dlogits = nullptr);

// Independent masked-CE implementation kept for the lambda=0 reduction check
// and for reporting; accumulation order matches maxent_loss so the two agree
// bit-for-bit.
double masked_cross_entropy(const Tensor& logits, const std::vector<LabelMap>& labels);

struct EntropyStats {
  double mean = 0.0;
  std::vector<int64_t> hist;  // 50 bins over [0, ln K]
  int64_t count = 0;
};

// Pools entropies over non-ignore pixels of labeled images (ID population) or
// over mask=1 pixels of synthesized samples (synth-OOD population).
EntropyStats pool_id_entropy(SegModel& model, const std::vector<LabeledImage>& samples,
                             const ClassTaxonomy& tax);
EntropyStats pool_synth_entropy(SegModel& model, const std::vector<SynthesizedSample>& samples);

struct FinetuneReport {
  double lambda = 0.0;
  int epochs = 0;
  double miou_before = 0.0;
  double miou_after = 0.0;
  EntropyStats id_before, id_after;    // over eval_id non-ignore pixels
  EntropyStats ood_before, ood_after;  // over eval_synth mask=1 pixels
  std::vector<LossBreakdown> curve;    // per epoch
};

// Entropy-regularized fine-tuning of a trained base model over the merged
// ID + synth pool (uniformly shuffled each epoch, so batches mix the two
// proportionally). Synth samples keep CE supervision only on their retained
// (unblurred) pixels. Writes the calibrated checkpoint, a per-epoch
// LossBreakdown CSV, finetune_report.json and before/after entropy histogram
// PNGs under out_dir. Empty d_synth logs a warning and reduces to CE-only
// fine-tuning. NaN loss throws TrainingError naming the epoch.
FinetuneReport finetune(SegModel& model, const std::vector<LabeledImage>& d_id,
                        const std::vector<SynthesizedSample>& d_synth, const ClassTaxonomy& tax,
                        const MaxEntConfig& cfg, const std::vector<LabeledImage>& eval_id,
                        const std::vector<SynthesizedSample>& eval_synth,
                        const std::filesystem::path& out_dir, const nlohmann::json& extra_meta = {},
                        std::ostream* log = nullptr);

}  // namespace memos
