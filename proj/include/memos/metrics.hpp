#pragma once

#include <cstdint>
#include <vector>

#include "memos/seg_model.hpp"

namespace memos {

// Per-pixel OOD score, higher = more likely OOD.
struct ScoreMap {
  int h = 0, w = 0;
  std::vector<double> v;

  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

// Per-pixel entropy of the class distribution.
ScoreMap score_entropy(const ProbabilityMap& probs);
// 1 - max class probability.
ScoreMap score_softmax(const ProbabilityMap& probs);
// Entropy of the per-pixel mean distribution across k >= 2 members.
ScoreMap score_ensemble(const std::vector<const ProbabilityMap*>& members);

// Average precision: AP = sum_n (R_n - R_{n-1}) * P_n over descending unique
// score thresholds, ties grouped. Labels are 0 (ID) / 1 (OOD); both classes
// must be present or MetricError is thrown.
double auprc(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

// False-positive rate at the loosest threshold reaching TPR >= 0.95, ties
// grouped. Same preconditions as auprc.
double fpr_at_95_tpr(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

// Confusion-matrix accumulator over taxonomy ids. Pixels whose ground truth
// is not a taxonomy class (ignore_id, ood_id, anything unknown) are skipped;
// predictions outside the taxonomy land in a dedicated bucket and count
// against their ground-truth class.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(const ClassTaxonomy& tax);

  void add(const LabelMap& pred_ids, const LabelMap& gt_ids);

  // Mean IoU over classes present in ground truth or prediction; vacuously
  // 1.0 when no class is present at all.
  double miou() const;

 private:
  std::vector<int> id_to_index_;  // 256 entries, -1 = not a class
  int k_ = 0;
  std::vector<int64_t> m_;  // (k+1) x (k+1), last bucket = unknown prediction
};

double miou(const LabelMap& pred, const LabelMap& gt, const ClassTaxonomy& tax);

}  // namespace memos
