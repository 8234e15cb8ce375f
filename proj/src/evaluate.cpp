#include "memos/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "memos/errors.hpp"
#include "memos/rng.hpp"

namespace memos {

Method method_from_name(const std::string& name) {
  if (name == "entropy") return Method::kEntropy;
  if (name == "softmax") return Method::kSoftmax;
  if (name == "maxent") return Method::kMaxEnt;
  if (name == "metacog_only") return Method::kMetacogOnly;
  if (name == "memos") return Method::kMemos;
  if (name == "ensemble") return Method::kEnsemble;
  throw ConfigError("unknown method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::kEntropy: return "entropy";
    case Method::kSoftmax: return "softmax";
    case Method::kMaxEnt: return "maxent";
    case Method::kMetacogOnly: return "metacog_only";
    case Method::kMemos: return "memos";
    case Method::kEnsemble: return "ensemble";
  }
  throw ConfigError("unknown method enum value");
}

namespace {

struct Pooled {
  std::vector<double> scores;
  std::vector<uint8_t> labels;
};

void pool_pixels(const std::vector<double>& score_values, const LabelMap& ood, Pooled& out) {
  if (score_values.size() != ood.v.size()) throw ShapeError("score map size differs from OOD labels");
  for (size_t i = 0; i < ood.v.size(); ++i) {
    const uint8_t l = ood.v[i];
    if (l != 0 && l != 1) continue;  // ignore pixels excluded from evaluation
    out.scores.push_back(score_values[i]);
    out.labels.push_back(l);
  }
}

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stdev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

// (recall, precision) at each descending tie-grouped threshold, thinned to
// at most `max_points`.
std::vector<std::pair<double, double>> pr_curve_points(const Pooled& pooled, size_t max_points) {
  std::vector<size_t> order(pooled.scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return pooled.scores[a] > pooled.scores[b]; });
  int64_t pos = 0;
  for (uint8_t l : pooled.labels) pos += l != 0;
  std::vector<std::pair<double, double>> pts;
  int64_t tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && pooled.scores[order[j]] == pooled.scores[order[i]]) {
      (pooled.labels[order[j]] ? tp : fp) += 1;
      ++j;
    }
    pts.emplace_back(static_cast<double>(tp) / static_cast<double>(pos),
                     static_cast<double>(tp) / static_cast<double>(tp + fp));
    i = j;
  }
  if (pts.size() > max_points) {
    std::vector<std::pair<double, double>> thin;
    for (size_t n = 0; n < max_points; ++n)
      thin.push_back(pts[n * (pts.size() - 1) / (max_points - 1)]);
    return thin;
  }
  return pts;
}

// One method's score map for a single image.
std::vector<double> score_image(Method m, SegModel& backbone, MetacogModel* metacog,
                                const ImageU8& image) {
  switch (m) {
    case Method::kEntropy:
    case Method::kMaxEnt:
      return score_entropy(softmax(backbone.forward_padded(normalize_image(image)))).v;
    case Method::kSoftmax:
      return score_softmax(softmax(backbone.forward_padded(normalize_image(image)))).v;
    case Method::kMetacogOnly:
    case Method::kMemos:
      return infer_ood_mask(*metacog, backbone, image).v;
    case Method::kEnsemble:
      break;
  }
  throw ConfigError("ensemble scoring is not per-backbone");
}

struct Reference {
  double auprc, fpr95, val_miou;
};

Reference full_scale_reference(Method m) {
  // Published full-scale results on Lost and Found (1024x2048, 3 seeds);
  // reported for orientation, never asserted at this scale.
  switch (m) {
    case Method::kEntropy: return {0.44, 0.22, 0.89};
    case Method::kSoftmax: return {0.26, 0.17, 0.89};
    case Method::kEnsemble: return {0.07, 0.26, 0.88};
    case Method::kMetacogOnly: return {0.48, 0.15, 0.85};
    case Method::kMaxEnt: return {0.64, 0.28, 0.90};
    case Method::kMemos: return {0.70, 0.12, 0.87};
  }
  throw ConfigError("unknown method enum value");
}

void fill_score_hists(MethodResult& r, const std::vector<Pooled>& pooled_per_seed) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Pooled& p : pooled_per_seed)
    for (double s : p.scores) {
      lo = std::min(lo, s);
      hi = std::max(hi, s);
    }
  if (!(hi > lo)) hi = lo + 1.0;
  constexpr int kBins = 50;
  r.score_range = {lo, hi};
  r.id_score_hist.assign(kBins, 0);
  r.ood_score_hist.assign(kBins, 0);
  for (const Pooled& p : pooled_per_seed)
    for (size_t i = 0; i < p.scores.size(); ++i) {
      const int bin = std::clamp(static_cast<int>((p.scores[i] - lo) / (hi - lo) * kBins), 0,
                                 kBins - 1);
      (p.labels[i] ? r.ood_score_hist : r.id_score_hist)[static_cast<size_t>(bin)] += 1;
    }
}

}  // namespace

MethodResult evaluate_method(Method method, const std::vector<LabeledImage>& ood_split,
                             const std::vector<LabeledImage>& val_split, const ClassTaxonomy& tax,
                             const std::vector<uint64_t>& seeds,
                             const std::vector<MethodArtifacts>& per_seed) {
  if (seeds.size() != per_seed.size())
    throw ConfigError("one artifact set per seed required");
  if (ood_split.empty()) throw ConfigError("OOD test split is empty");
  for (const LabeledImage& s : ood_split)
    if (!s.ood) throw ConfigError("sample " + s.id + " lacks OOD labels");

  MethodResult r;
  r.method = method_name(method);
  r.seeds = seeds;
  std::vector<Pooled> pooled_per_seed;

  if (method == Method::kEnsemble) {
    if (seeds.size() < 2) throw ConfigError("ensemble needs at least 2 seeds");
    std::vector<SegModel> members;
    members.reserve(seeds.size());
    for (const MethodArtifacts& a : per_seed) members.push_back(load_seg_model(a.backbone));
    Pooled pooled;
    for (const LabeledImage& s : ood_split) {
      std::vector<ProbabilityMap> probs;
      probs.reserve(members.size());
      for (SegModel& m : members)
        probs.push_back(softmax(m.forward_padded(normalize_image(s.image))));
      std::vector<const ProbabilityMap*> views;
      for (const ProbabilityMap& p : probs) views.push_back(&p);
      pool_pixels(score_ensemble(views).v, *s.ood, pooled);
    }
    r.auprc_per_seed = {auprc(pooled.scores, pooled.labels)};
    r.fpr95_per_seed = {fpr_at_95_tpr(pooled.scores, pooled.labels)};
    for (SegModel& m : members)
      r.val_miou_per_seed.push_back(evaluate_segmentation(m, val_split, tax).miou);
    r.pr_points = pr_curve_points(pooled, 400);
    pooled_per_seed.push_back(std::move(pooled));
  } else {
    for (size_t si = 0; si < seeds.size(); ++si) {
      SegModel backbone = load_seg_model(per_seed[si].backbone);
      std::optional<MetacogModel> metacog;
      if (!per_seed[si].metacog.empty()) metacog.emplace(load_metacog_model(per_seed[si].metacog));
      Pooled pooled;
      for (const LabeledImage& s : ood_split)
        pool_pixels(score_image(method, backbone, metacog ? &*metacog : nullptr, s.image), *s.ood,
                    pooled);
      r.auprc_per_seed.push_back(auprc(pooled.scores, pooled.labels));
      r.fpr95_per_seed.push_back(fpr_at_95_tpr(pooled.scores, pooled.labels));
      r.val_miou_per_seed.push_back(evaluate_segmentation(backbone, val_split, tax).miou);
      if (si == 0) r.pr_points = pr_curve_points(pooled, 400);
      pooled_per_seed.push_back(std::move(pooled));
    }
  }

  r.auprc = mean_std(r.auprc_per_seed);
  r.fpr95 = mean_std(r.fpr95_per_seed);
  r.val_miou = mean_std(r.val_miou_per_seed);
  fill_score_hists(r, pooled_per_seed);
  return r;
}

namespace {

nlohmann::json mean_std_json(const MeanStd& m) {
  return {{"mean", m.mean}, {"std", m.stdev ? nlohmann::json(*m.stdev) : nlohmann::json()}};
}

}  // namespace

nlohmann::json method_report_json(const MethodResult& r, const std::string& dataset,
                                  const std::string& cfg_hash) {
  const Reference ref = full_scale_reference(method_from_name(r.method));
  return {{"method", r.method},
          {"dataset", dataset},
          {"seeds", r.seeds},
          {"metrics",
           {{"auprc", mean_std_json(r.auprc)},
            {"fpr95", mean_std_json(r.fpr95)},
            {"val_miou", mean_std_json(r.val_miou)}}},
          {"timing", nullptr},  // wall-clock numbers live in timing.json (bench-time)
          {"config_hash", cfg_hash},
          {"per_seed",
           {{"auprc", r.auprc_per_seed},
            {"fpr95", r.fpr95_per_seed},
            {"val_miou", r.val_miou_per_seed}}},
          {"pooling", "global_pixel"},
          {"full_scale_reference",
           {{"dataset", "lost_and_found_1024x2048"},
            {"auprc", ref.auprc},
            {"fpr95", ref.fpr95},
            {"val_miou", ref.val_miou}}}};
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<MethodResult>& results) {
  std::ofstream os(path);
  if (!os) throw LoadError("cannot write " + path.string());
  os.setf(std::ios::fixed);
  os.precision(6);
  os << "method,auprc_mean,auprc_std,fpr95_mean,fpr95_std,val_miou_mean,val_miou_std\n";
  for (const MethodResult& r : results) {
    os << r.method << ',' << r.auprc.mean << ',';
    if (r.auprc.stdev) os << *r.auprc.stdev;
    os << ',' << r.fpr95.mean << ',';
    if (r.fpr95.stdev) os << *r.fpr95.stdev;
    os << ',' << r.val_miou.mean << ',';
    if (r.val_miou.stdev) os << *r.val_miou.stdev;
    os << '\n';
  }
}

TimingReport benchmark_inference_time(SegModel& backbone, MetacogModel& metacog, int height,
                                      int width, int warmup, int iters) {
  if (iters < 1) throw ConfigError("bench_iters must be >= 1");
  if (warmup < 0) throw ConfigError("bench_warmup must be >= 0");
  if (metacog.config().num_classes != backbone.config().num_classes)
    throw CompatibilityError("metacog and backbone checkpoints disagree on K");

  // Deterministic noise input; timing does not depend on pixel content.
  ImageU8 img(height, width);
  Rng rng(derive_seed(0, fnv1a64("bench_image")));
  for (uint8_t& b : img.rgb) b = static_cast<uint8_t>(rng.uniform_int(256));

  using Clock = std::chrono::steady_clock;
  const auto ms = [](Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };

  std::vector<double> backbone_ms, metacog_ms, total_ms;
  for (int it = 0; it < warmup + iters; ++it) {
    const auto t0 = Clock::now();
    Tensor logits = backbone.forward_padded(normalize_image(img));
    const auto t1 = Clock::now();
    const ProbabilityMap probs = softmax(logits);
    const MetacogInput in = build_metacog_input(probs, metacog.config().features);
    Tensor x = metacog_inputs_to_tensor({&in});
    const auto t2 = Clock::now();
    Tensor mlogits = metacog.forward_padded(x);
    const auto t3 = Clock::now();
    const SoftOODMask mask = sigmoid_mask(mlogits);
    const auto t4 = Clock::now();
    if (mask.v.empty()) throw NumericError("empty mask from timing pipeline");
    if (it < warmup) continue;
    backbone_ms.push_back(ms(t0, t1));
    metacog_ms.push_back(ms(t2, t3));
    total_ms.push_back(ms(t0, t4));
  }

  const auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };

  TimingReport t;
  t.backbone_ms = median(backbone_ms);
  t.metacog_ms = median(metacog_ms);
  t.total_ms = median(total_ms);
  t.ratio = t.metacog_ms / t.backbone_ms;
  t.height = height;
  t.width = width;
  t.warmup = warmup;
  t.iters = iters;
  t.low_confidence = iters < 2 || warmup < 1;
  t.device = "cpu single-thread (" + std::to_string(std::thread::hardware_concurrency()) +
             " hw threads visible)";
  return t;
}

nlohmann::json timing_report_json(const TimingReport& t, const std::string& cfg_hash) {
  return {{"backbone_ms", t.backbone_ms},
          {"metacog_ms", t.metacog_ms},
          {"total_ms", t.total_ms},
          {"ratio_metacog_over_backbone", t.ratio},
          {"input_resolution", {{"height", t.height}, {"width", t.width}}},
          {"device", t.device},
          {"warmup", t.warmup},
          {"iters", t.iters},
          {"low_confidence", t.low_confidence},
          {"config_hash", cfg_hash},
          {"full_scale_reference",
           {{"backbone_ms", 24.5},
            {"metacog_ms", 6.4},
            {"ratio", 6.4 / 24.5},
            {"resolution", "1024x2048"},
            {"device", "RTX 3090"}}}};
}

}  // namespace memos
