#include "memos/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "memos/errors.hpp"
#include "memos/maxent.hpp"

namespace memos {

ScoreMap score_entropy(const ProbabilityMap& probs) {
  const EntropyMap e = entropy_map(probs);
  ScoreMap s;
  s.h = e.h;
  s.w = e.w;
  s.v = e.v;
  return s;
}

ScoreMap score_softmax(const ProbabilityMap& probs) {
  ScoreMap s;
  s.h = probs.h;
  s.w = probs.w;
  s.v.resize(static_cast<size_t>(probs.h) * probs.w);
  for (int y = 0; y < probs.h; ++y)
    for (int x = 0; x < probs.w; ++x) {
      const double* row = probs.row(y, x);
      double pmax = row[0];
      for (int c = 1; c < probs.k; ++c) pmax = std::max(pmax, row[c]);
      s.at(y, x) = 1.0 - pmax;
    }
  return s;
}

ScoreMap score_ensemble(const std::vector<const ProbabilityMap*>& members) {
  if (members.size() < 2) throw ConfigError("ensemble scoring needs at least 2 members");
  const ProbabilityMap& first = *members[0];
  for (const ProbabilityMap* m : members)
    if (m->h != first.h || m->w != first.w || m->k != first.k)
      throw ShapeError("ensemble members disagree on map shape");

  ProbabilityMap mean;
  mean.h = first.h;
  mean.w = first.w;
  mean.k = first.k;
  mean.v.assign(first.v.size(), 0.0);
  for (const ProbabilityMap* m : members)
    for (size_t i = 0; i < mean.v.size(); ++i) mean.v[i] += m->v[i];
  const double inv = 1.0 / static_cast<double>(members.size());
  for (double& p : mean.v) p *= inv;
  return score_entropy(mean);
}

namespace {

// Indices sorted by descending score, plus positive/negative totals.
struct RankedScores {
  std::vector<size_t> order;
  int64_t pos = 0, neg = 0;
};

RankedScores rank(const std::vector<double>& scores, const std::vector<uint8_t>& labels,
                  const char* metric) {
  if (scores.size() != labels.size()) throw ShapeError("scores and labels differ in length");
  RankedScores r;
  for (uint8_t l : labels) (l ? r.pos : r.neg) += 1;
  if (r.pos == 0 || r.neg == 0)
    throw MetricError(std::string(metric) + " undefined: needs both ID and OOD pixels");
  r.order.resize(scores.size());
  std::iota(r.order.begin(), r.order.end(), size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](size_t a, size_t b) { return scores[a] > scores[b]; });
  return r;
}

}  // namespace

double auprc(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  const RankedScores r = rank(scores, labels, "auprc");
  double ap = 0.0, recall_prev = 0.0;
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < r.order.size()) {
    size_t j = i;  // group of tied scores shares one threshold
    while (j < r.order.size() && scores[r.order[j]] == scores[r.order[i]]) {
      (labels[r.order[j]] ? tp : fp) += 1;
      ++j;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(r.pos);
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
    i = j;
  }
  return ap;
}

double fpr_at_95_tpr(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
  const RankedScores r = rank(scores, labels, "fpr_at_95_tpr");
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < r.order.size()) {
    size_t j = i;
    while (j < r.order.size() && scores[r.order[j]] == scores[r.order[i]]) {
      (labels[r.order[j]] ? tp : fp) += 1;
      ++j;
    }
    const double tpr = static_cast<double>(tp) / static_cast<double>(r.pos);
    if (tpr >= 0.95) return static_cast<double>(fp) / static_cast<double>(r.neg);
    i = j;
  }
  return 1.0;  // unreachable: the loosest threshold always reaches TPR = 1
}

ConfusionAccumulator::ConfusionAccumulator(const ClassTaxonomy& tax)
    : id_to_index_(256, -1), k_(tax.num_classes()) {
  for (int i = 0; i < k_; ++i) id_to_index_[static_cast<size_t>(tax.class_ids[static_cast<size_t>(i)])] = i;
  m_.assign(static_cast<size_t>(k_ + 1) * (k_ + 1), 0);
}

void ConfusionAccumulator::add(const LabelMap& pred_ids, const LabelMap& gt_ids) {
  if (pred_ids.h != gt_ids.h || pred_ids.w != gt_ids.w)
    throw ShapeError("prediction and ground truth sizes differ");
  for (size_t i = 0; i < gt_ids.v.size(); ++i) {
    const int g = id_to_index_[gt_ids.v[i]];
    if (g < 0) continue;  // ignore / ood / unknown ground truth
    int p = id_to_index_[pred_ids.v[i]];
    if (p < 0) p = k_;
    m_[static_cast<size_t>(g) * (k_ + 1) + p] += 1;
  }
}

double ConfusionAccumulator::miou() const {
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < k_; ++c) {
    int64_t gt_count = 0, pred_count = 0;
    for (int p = 0; p <= k_; ++p) gt_count += m_[static_cast<size_t>(c) * (k_ + 1) + p];
    for (int g = 0; g < k_; ++g) pred_count += m_[static_cast<size_t>(g) * (k_ + 1) + c];
    const int64_t inter = m_[static_cast<size_t>(c) * (k_ + 1) + c];
    const int64_t uni = gt_count + pred_count - inter;
    if (uni == 0) continue;
    sum += static_cast<double>(inter) / static_cast<double>(uni);
    ++present;
  }
  return present == 0 ? 1.0 : sum / static_cast<double>(present);
}

double miou(const LabelMap& pred, const LabelMap& gt, const ClassTaxonomy& tax) {
  ConfusionAccumulator acc(tax);
  acc.add(pred, gt);
  return acc.miou();
}

}  // namespace memos
