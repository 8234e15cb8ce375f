#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "memos/errors.hpp"
#include "memos/metrics.hpp"
#include "memos/rng.hpp"
#include "test_util.hpp"

using namespace memos;
using memos::test::MetricInstance;
using memos::test::oracle_auprc;
using memos::test::oracle_fpr95;
using memos::test::random_metric_instance;

TEST_SUITE_BEGIN("metrics");

TEST_CASE("auprc hand example") {
  // Thresholds descending: 0.9 -> P=1, R=1/2; 0.8 -> P=1/2; 0.3 -> P=2/3, R=1;
  // AP = (1/2)*1 + 0 + (1/2)*(2/3) = 5/6.
  const double ap = auprc({0.9, 0.8, 0.3, 0.1}, {1, 0, 1, 0});
  CHECK(ap == doctest::Approx(5.0 / 6.0).epsilon(1e-9));
  CHECK(ap == doctest::Approx(0.8333).epsilon(1e-4));
}

TEST_CASE("auprc perfect ranking is 1") {
  CHECK(auprc({1.0, 0.0, 1.0, 0.0}, {1, 0, 1, 0}) == doctest::Approx(1.0));
}

TEST_CASE("auprc random scores approx prevalence at 1% positives") {
  Rng rng(42);
  double acc = 0.0;
  const int trials = 10;
  for (int t = 0; t < trials; ++t) {
    std::vector<double> scores;
    std::vector<uint8_t> labels;
    for (int i = 0; i < 5000; ++i) {
      scores.push_back(rng.uniform());  // score independent of label
      labels.push_back(rng.uniform() < 0.01 ? 1 : 0);
    }
    labels[0] = 1;
    labels[1] = 0;
    acc += auprc(scores, labels);
  }
  CHECK(acc / trials == doctest::Approx(0.01).epsilon(1.0));  // 0.01 +- 0.01
}

TEST_CASE("auprc single-class labels throw") {
  CHECK_THROWS_AS(auprc({0.1, 0.2}, {1, 1}), MetricError);
  CHECK_THROWS_AS(auprc({0.1, 0.2}, {0, 0}), MetricError);
  CHECK_THROWS_AS(fpr_at_95_tpr({0.1, 0.2}, {1, 1}), MetricError);
}

TEST_CASE("fpr95 hand example") {
  // OOD {0.9, 0.7}, ID {0.8, 0.2}: TPR hits 1.0 only at threshold 0.7, which
  // admits the ID score 0.8 -> FPR 1/2.
  CHECK(fpr_at_95_tpr({0.9, 0.8, 0.7, 0.2}, {1, 0, 1, 0}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("fpr95 perfectly separated is 0, inverted is 1") {
  CHECK(fpr_at_95_tpr({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == doctest::Approx(0.0));
  CHECK(fpr_at_95_tpr({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}) == doctest::Approx(1.0));
}

TEST_CASE("oracle equivalence on random instances with ties") {
  Rng rng(7);
  const double rates[] = {0.01, 0.1, 0.5};
  for (int t = 0; t < 30; ++t) {
    MetricInstance mi = random_metric_instance(rng, 1000, rates[t % 3]);
    CHECK(auprc(mi.scores, mi.labels) ==
          doctest::Approx(oracle_auprc(mi.scores, mi.labels)).epsilon(1e-9));
    CHECK(fpr_at_95_tpr(mi.scores, mi.labels) ==
          doctest::Approx(oracle_fpr95(mi.scores, mi.labels)).epsilon(1e-9));
  }
}

TEST_CASE("permutation invariance") {
  Rng rng(11);
  MetricInstance mi = random_metric_instance(rng, 500, 0.1);
  const double ap0 = auprc(mi.scores, mi.labels);
  const double fp0 = fpr_at_95_tpr(mi.scores, mi.labels);
  std::vector<size_t> order(mi.scores.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<double> s2;
  std::vector<uint8_t> l2;
  for (size_t i : order) {
    s2.push_back(mi.scores[i]);
    l2.push_back(mi.labels[i]);
  }
  CHECK(auprc(s2, l2) == doctest::Approx(ap0).epsilon(1e-12));
  CHECK(fpr_at_95_tpr(s2, l2) == doctest::Approx(fp0).epsilon(1e-12));
}

TEST_CASE("score-monotone invariance") {
  Rng rng(13);
  MetricInstance mi = random_metric_instance(rng, 500, 0.1);
  const double ap0 = auprc(mi.scores, mi.labels);
  const double fp0 = fpr_at_95_tpr(mi.scores, mi.labels);
  std::vector<double> warped = mi.scores;
  for (double& s : warped) s = std::exp(3.0 * s) + 0.5 * s;  // strictly increasing
  CHECK(auprc(warped, mi.labels) == doctest::Approx(ap0).epsilon(1e-12));
  CHECK(fpr_at_95_tpr(warped, mi.labels) == doctest::Approx(fp0).epsilon(1e-12));
}

TEST_CASE("miou hand examples") {
  const ClassTaxonomy tax = ClassTaxonomy::contiguous(2);
  LabelMap gt(2, 2, 0), pred(2, 2, 0);
  gt.at(1, 0) = 1;
  gt.at(1, 1) = 1;
  pred.at(0, 1) = 1;
  pred.at(1, 0) = 1;
  pred.at(1, 1) = 1;
  // IoU0 = 1/2, IoU1 = 2/3 -> mIoU = 7/12.
  CHECK(miou(pred, gt, tax) == doctest::Approx(7.0 / 12.0).epsilon(1e-12));

  LabelMap const0(2, 2, 0);
  // Constant class 0 vs balanced gt: IoU0 = 1/2, IoU1 = 0 -> 0.25.
  CHECK(miou(const0, gt, tax) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("miou identity is 1") {
  const ClassTaxonomy tax = ClassTaxonomy::contiguous(5);
  Rng rng(3);
  LabelMap a(9, 7, 0);
  for (int y = 0; y < a.h; ++y)
    for (int x = 0; x < a.w; ++x) a.at(y, x) = static_cast<uint8_t>(rng.uniform_in(0, 4));
  CHECK(miou(a, a, tax) == doctest::Approx(1.0));
}

TEST_CASE("miou excludes ignore pixels") {
  const ClassTaxonomy tax = ClassTaxonomy::contiguous(2);
  LabelMap gt(1, 4, 0), pred(1, 4, 0);
  gt.at(0, 2) = 1;
  gt.at(0, 3) = static_cast<uint8_t>(tax.ignore_id);
  pred.at(0, 2) = 1;
  pred.at(0, 3) = 0;  // disagreement only under an ignore pixel
  CHECK(miou(pred, gt, tax) == doctest::Approx(1.0));
}

TEST_CASE("score maps: entropy, softmax, ensemble") {
  ProbabilityMap p;
  p.h = 1;
  p.w = 2;
  p.k = 4;
  p.v = {1.0, 0.0, 0.0, 0.0, 0.25, 0.25, 0.25, 0.25};  // one-hot, uniform
  ScoreMap ent = score_entropy(p);
  ScoreMap sm = score_softmax(p);
  CHECK(ent.at(0, 0) == doctest::Approx(0.0));
  CHECK(sm.at(0, 0) == doctest::Approx(0.0));
  CHECK(ent.at(0, 1) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(sm.at(0, 1) == doctest::Approx(1.0 - 0.25).epsilon(1e-12));

  // Two members one-hot on different classes: mean is two-point uniform.
  ProbabilityMap a = p, b = p;
  a.v = {1, 0, 0, 0, 1, 0, 0, 0};
  b.v = {0, 1, 0, 0, 0, 1, 0, 0};
  ScoreMap ens = score_ensemble({&a, &b});
  CHECK(ens.at(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(score_ensemble({&a}), Error);  // needs k >= 2
}

TEST_SUITE_END();
