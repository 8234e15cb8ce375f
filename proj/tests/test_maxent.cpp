#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "memos/errors.hpp"
#include "memos/maxent.hpp"
#include "memos/toy_scenes.hpp"
#include "test_util.hpp"

using namespace memos;
using memos::test::TempDir;

namespace {

Tensor random_logits(Rng& rng, std::vector<int> shape, double scale = 1.5) {
  Tensor t(shape);
  for (size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(scale * rng.normal());
  return t;
}

// Central finite differences of maxent_loss.total with respect to each logit.
double numeric_grad(Tensor logits, const std::vector<LabelMap>& labels,
                    const std::vector<LabelMap>& masks, double lambda, size_t i, double step) {
  logits[i] = static_cast<float>(logits[i] + step);
  const double up = maxent_loss(logits, labels, masks, lambda).total;
  logits[i] = static_cast<float>(logits[i] - 2 * step);
  const double dn = maxent_loss(logits, labels, masks, lambda).total;
  return (up - dn) / (2 * step);
}

}  // namespace

TEST_SUITE_BEGIN("maxent");

TEST_CASE("single blurred pixel, logits [1,2,3], lambda=1: total is minus the entropy") {
  Tensor logits({1, 3, 1, 1});
  logits.at(0, 0, 0, 0) = 1.0f;
  logits.at(0, 1, 0, 0) = 2.0f;
  logits.at(0, 2, 0, 0) = 3.0f;
  LabelMap labels(1, 1, 255);
  LabelMap mask(1, 1, 1);
  LossBreakdown lb = maxent_loss(logits, {labels}, {mask}, 1.0);

  // Hand-computed: softmax([1,2,3]) = (0.09003057, 0.24472847, 0.66524096),
  // entropy = 0.8323955 nats.
  CHECK(lb.maxent_term == doctest::Approx(0.8323955).epsilon(1e-6));
  CHECK(lb.ce_term == 0.0);
  CHECK(lb.total == doctest::Approx(-0.8323955).epsilon(1e-6));
  CHECK(lb.ce_pixel_count == 0);
  CHECK(lb.synth_pixel_count == 1);
}

TEST_CASE("all synth pixels predicted uniform: maxent_term reaches ln K") {
  for (int k : {2, 5, 8}) {
    Tensor logits({1, k, 4, 4});  // all zeros -> uniform softmax
    LabelMap labels(4, 4, 255);
    LabelMap mask(4, 4, 1);
    LossBreakdown lb = maxent_loss(logits, {labels}, {mask}, 1.0);
    CHECK(lb.maxent_term == doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-9));
  }
}

TEST_CASE("lambda=0 equals masked cross-entropy bit-for-bit") {
  Rng rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor logits = random_logits(rng, {2, 6, 5, 7});
    std::vector<LabelMap> labels;
    std::vector<LabelMap> masks;
    for (int n = 0; n < 2; ++n) {
      LabelMap lm(5, 7);
      LabelMap mk(5, 7, 0);
      for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x) {
          const int r = rng.uniform_in(0, 9);
          lm.at(y, x) = r < 7 ? static_cast<uint8_t>(rng.uniform_in(0, 5)) : uint8_t{255};
          if (r == 9) {
            mk.at(y, x) = 1;
            lm.at(y, x) = 255;
          }
        }
      lm.at(0, 0) = 3;  // guarantee at least one supervised pixel
      labels.push_back(lm);
      masks.push_back(mk);
    }
    const LossBreakdown lb = maxent_loss(logits, labels, masks, 0.0);
    const double ce = masked_cross_entropy(logits, labels);
    REQUIRE(lb.total == ce);  // exact, not approximate
    REQUIRE(lb.ce_term == ce);
  }
}

TEST_CASE("analytic gradient matches central differences on 5-class single pixels") {
  Rng rng(78);
  for (double lambda : {0.0, 0.5, 1.0}) {
    for (int trial = 0; trial < 8; ++trial) {
      Tensor logits = random_logits(rng, {1, 5, 1, 1});
      const bool synth = trial % 2 == 1;
      LabelMap labels(1, 1, synth ? 255 : static_cast<uint8_t>(rng.uniform_in(0, 4)));
      LabelMap mask(1, 1, synth ? 1 : 0);
      Tensor dlogits;
      maxent_loss(logits, {labels}, {mask}, lambda, &dlogits);
      if (lambda == 0.0 && synth) continue;  // objective constant: zero gradient
      for (size_t i = 0; i < logits.size(); ++i) {
        const double num = numeric_grad(logits, {labels}, {mask}, lambda, i, 1e-5);
        const double ana = dlogits[i];
        const double denom = std::max({std::abs(num), std::abs(ana), 1e-3});
        REQUIRE(std::abs(num - ana) / denom < 1e-4);
      }
    }
  }
}

TEST_CASE("total reconstructs from the stored parts") {
  Rng rng(79);
  for (int trial = 0; trial < 10; ++trial) {
    const double lambda = rng.uniform() * 2.0;
    Tensor logits = random_logits(rng, {1, 4, 6, 6});
    LabelMap labels(6, 6);
    LabelMap mask(6, 6, 0);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) {
        labels.at(y, x) = static_cast<uint8_t>(rng.uniform_in(0, 3));
        if (rng.uniform() < 0.3) {
          mask.at(y, x) = 1;
          labels.at(y, x) = 255;
        }
      }
    labels.at(0, 0) = 1;
    const LossBreakdown lb = maxent_loss(logits, {labels}, {mask}, lambda);
    CHECK(lb.total == doctest::Approx(lb.ce_term - lambda * lb.maxent_term).epsilon(1e-6));
  }
}

TEST_CASE("batch with neither CE nor synth pixels is degenerate") {
  Tensor logits({1, 3, 2, 2});
  LabelMap labels(2, 2, 255);
  CHECK_THROWS_AS(maxent_loss(logits, {labels}, {}, 1.0), TrainingError);
}

TEST_CASE("entropy bounds hold for arbitrary probability maps") {
  Rng rng(80);
  ProbabilityMap pm;
  pm.h = 20;
  pm.w = 20;
  pm.k = 7;
  pm.v.resize(static_cast<size_t>(pm.h) * pm.w * pm.k);
  for (int y = 0; y < pm.h; ++y)
    for (int x = 0; x < pm.w; ++x) {
      double sum = 0.0;
      for (int c = 0; c < pm.k; ++c) {
        const double e = -std::log(rng.uniform() + 1e-12);
        pm.at(y, x, c) = e;
        sum += e;
      }
      for (int c = 0; c < pm.k; ++c) pm.at(y, x, c) /= sum;
    }
  EntropyMap em = entropy_map(pm);
  const double lnk = std::log(7.0);
  for (double v : em.v) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= lnk + 1e-12);
  }
}

namespace {

struct TinyWorld {
  TempDir dir{"maxent_world"};
  ClassTaxonomy tax = ClassTaxonomy::contiguous(6);
  std::vector<LabeledImage> train, val;
  SynthDataset synth;

  explicit TinyWorld(uint64_t seed) {
    ToySceneConfig tc;
    tc.height = 32;
    tc.width = 32;
    tc.num_classes = 6;
    tc.seed = seed;
    tc.splits = {{"train", 12, false}, {"val", 6, false}};
    generate_toy_scenes(dir, tc);
    train = load_dataset(dir, "train");
    val = load_dataset(dir, "val");
    SynthConfig sc;
    sc.subset_size = 3;
    sc.sample_count = 6;
    sc.blur_sigma = 4.0;
    sc.seed = seed + 9;
    synth = build_synth_dataset(train, tax, sc);
  }

  SegModel trained_base(uint64_t seed, const std::filesystem::path& ckpt) {
    SegModelConfig mc;
    mc.num_classes = 6;
    mc.depth = 2;
    mc.base_width = 8;
    mc.seed = seed;
    TrainHyperparams hp;
    hp.epochs = 8;
    hp.batch = 4;
    hp.seed = seed + 1;
    SegModel m(mc);
    train_segmentation(m, train, val, tax, hp, ckpt);
    return m;
  }
};

}  // namespace

TEST_CASE("fine-tuning raises synth entropy without hurting ID behavior") {
  TinyWorld w(410);
  TempDir base_ckpt("maxent_base"), ft_ckpt("maxent_ft");
  SegModel m = w.trained_base(411, base_ckpt);

  MaxEntConfig mc;
  mc.lambda = 0.5;
  mc.epochs = 3;
  mc.lr = 2e-4;
  mc.batch = 4;
  mc.seed = 412;
  FinetuneReport rep = finetune(m, w.train, w.synth.samples, w.tax, mc, w.val, w.synth.samples,
                                ft_ckpt);

  CHECK(rep.ood_after.mean > rep.ood_before.mean);                 // strictly up
  CHECK(rep.id_after.mean <= rep.id_before.mean + 0.05);           // ID entropy held
  CHECK(rep.miou_after >= rep.miou_before - 0.03);                 // no ID degradation
  CHECK(rep.curve.size() == 3);
  for (const auto& lb : rep.curve)
    CHECK(lb.total == doctest::Approx(lb.ce_term - mc.lambda * lb.maxent_term).epsilon(1e-6));

  // Artifacts land on disk.
  CHECK(std::filesystem::exists(ft_ckpt.path() / "weights.bin"));
  CHECK(std::filesystem::exists(ft_ckpt.path() / "finetune_report.json"));
}

TEST_CASE("mean synth entropy after fine-tuning is non-decreasing in lambda") {
  // 3-seed average over lambda in {0, 0.1, 1} on a fixed tiny problem.
  double means[3] = {0.0, 0.0, 0.0};
  const double lambdas[3] = {0.0, 0.1, 1.0};
  for (uint64_t seed : {420ULL, 421ULL, 422ULL}) {
    TinyWorld w(seed);
    TempDir base_ckpt("maxent_mono_base");
    SegModel base = w.trained_base(seed + 100, base_ckpt);
    for (int li = 0; li < 3; ++li) {
      SegModel m = load_seg_model(base_ckpt);
      TempDir ft("maxent_mono_ft");
      MaxEntConfig mc;
      mc.lambda = lambdas[li];
      mc.epochs = 3;
      mc.lr = 2e-4;
      mc.batch = 4;
      mc.seed = seed + 200;
      FinetuneReport rep =
          finetune(m, w.train, w.synth.samples, w.tax, mc, w.val, w.synth.samples, ft);
      means[li] += rep.ood_after.mean / 3.0;
    }
  }
  CHECK(means[1] >= means[0]);
  CHECK(means[2] >= means[1]);
}

TEST_CASE("lambda=0 fine-tuning matches plain CE fine-tuning over the same pool") {
  // The lambda=0 arm runs the mixed-objective trainer; the control arm runs
  // the segmentation module's CE trainer over the identical sample pool with
  // blurred pixels voided to ignore. Pooled ID entropies from the two arms
  // must be statistically indistinguishable (two-sample KS, p > 0.01,
  // 3 seeds).
  std::vector<double> arm_a, arm_b;
  for (uint64_t seed : {430ULL, 431ULL, 432ULL}) {
    TinyWorld w(seed);
    TempDir base_ckpt("maxent_ks_base");
    w.trained_base(seed + 100, base_ckpt);

    // Arm A: finetune with lambda = 0.
    {
      SegModel m = load_seg_model(base_ckpt);
      TempDir ft("maxent_ks_a");
      MaxEntConfig mc;
      mc.lambda = 0.0;
      mc.epochs = 2;
      mc.lr = 2e-4;
      mc.batch = 4;
      mc.seed = seed + 200;
      finetune(m, w.train, w.synth.samples, w.tax, mc, w.val, w.synth.samples, ft);
      EntropyStats st = pool_id_entropy(m, w.val, w.tax);
      // Reconstruct per-pixel values from the histogram for the KS test.
      const double lnk = std::log(6.0);
      for (size_t b = 0; b < st.hist.size(); ++b)
        for (int64_t c = 0; c < st.hist[b]; ++c)
          arm_a.push_back((static_cast<double>(b) + 0.5) * lnk / static_cast<double>(st.hist.size()));
    }

    // Arm B: CE trainer over the merged pool, blurred pixels -> ignore.
    {
      SegModel m = load_seg_model(base_ckpt);
      std::vector<LabeledImage> pool = w.train;
      for (const auto& s : w.synth.samples) {
        LabeledImage li;
        li.id = s.id;
        li.image = s.image;
        li.labels = s.labels;
        for (int y = 0; y < li.labels.h; ++y)
          for (int x = 0; x < li.labels.w; ++x)
            if (s.synth_mask.at(y, x)) li.labels.at(y, x) = 255;
        pool.push_back(li);
      }
      TempDir ft("maxent_ks_b");
      TrainHyperparams hp;
      hp.epochs = 2;
      hp.lr = 2e-4;
      hp.batch = 4;
      hp.seed = seed + 200;
      train_segmentation(m, pool, w.val, w.tax, hp, ft);
      EntropyStats st = pool_id_entropy(m, w.val, w.tax);
      const double lnk = std::log(6.0);
      for (size_t b = 0; b < st.hist.size(); ++b)
        for (int64_t c = 0; c < st.hist[b]; ++c)
          arm_b.push_back((static_cast<double>(b) + 0.5) * lnk / static_cast<double>(st.hist.size()));
    }
  }

  REQUIRE_FALSE(arm_a.empty());
  REQUIRE_FALSE(arm_b.empty());
  std::sort(arm_a.begin(), arm_a.end());
  std::sort(arm_b.begin(), arm_b.end());
  // Two-sample KS statistic.
  double d = 0.0;
  size_t i = 0, j = 0;
  const double n1 = static_cast<double>(arm_a.size()), n2 = static_cast<double>(arm_b.size());
  while (i < arm_a.size() && j < arm_b.size()) {
    if (arm_a[i] <= arm_b[j]) ++i; else ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n1 - static_cast<double>(j) / n2));
  }
  // Asymptotic p-value (Smirnov series); below lam ~ 0.3 the series is
  // numerically useless but the true value is 1 to many digits.
  const double ne = std::sqrt(n1 * n2 / (n1 + n2));
  const double lam = (ne + 0.12 + 0.11 / ne) * d;
  double p = 1.0;
  if (lam >= 0.3) {
    p = 0.0;
    for (int t = 1; t <= 100; ++t)
      p += 2.0 * std::pow(-1.0, t - 1) * std::exp(-2.0 * t * t * lam * lam);
    p = std::min(1.0, std::max(0.0, p));
  }
  CHECK(p > 0.01);
}

TEST_CASE("empty synth pool reduces to CE-only fine-tuning with a warning") {
  TinyWorld w(440);
  TempDir base_ckpt("maxent_nosynth_base"), ft("maxent_nosynth_ft");
  SegModel m = w.trained_base(441, base_ckpt);
  MaxEntConfig mc;
  mc.lambda = 1.0;
  mc.epochs = 1;
  mc.lr = 2e-4;
  mc.batch = 4;
  mc.seed = 442;
  std::ostringstream log;
  FinetuneReport rep = finetune(m, w.train, {}, w.tax, mc, w.val, {}, ft, {}, &log);
  CHECK(rep.curve.size() == 1);
  CHECK(rep.curve[0].synth_pixel_count == 0);
  CHECK(log.str().find("warn") != std::string::npos);
}

TEST_SUITE_END();
