#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"

#include "memos/metacog.hpp"
#include "memos/metrics.hpp"

namespace memos {

enum class Method { kEntropy, kSoftmax, kMaxEnt, kMetacogOnly, kMemos, kEnsemble };

Method method_from_name(const std::string& name);
std::string method_name(Method m);

struct MeanStd {
  double mean = 0.0;
  std::optional<double> stdev;  // sample std; absent for a single value
};

struct MethodResult {
  std::string method;
  std::vector<uint64_t> seeds;
  std::vector<double> auprc_per_seed;  // one entry for ensemble (consensus)
  std::vector<double> fpr95_per_seed;
  std::vector<double> val_miou_per_seed;  // per member for ensemble
  MeanStd auprc, fpr95, val_miou;
  std::vector<std::pair<double, double>> pr_points;  // (recall, precision), first seed
  std::vector<int64_t> id_score_hist, ood_score_hist;  // 50 bins over score_range
  std::pair<double, double> score_range{0.0, 1.0};
};

// Checkpoint directories backing one seed of a method. metacog is empty for
// methods that do not use the metacognitive net.
struct MethodArtifacts {
  std::filesystem::path backbone;
  std::filesystem::path metacog;
};

// Scores the OOD test split with the method, pools pixels across the whole
// split per seed, and aggregates metrics over seeds. The ensemble method
// instead pools one consensus score over all per-seed backbones (needs >= 2),
// so its AUPRC/FPR-95 carry no across-seed std.
MethodResult evaluate_method(Method method, const std::vector<LabeledImage>& ood_split,
                             const std::vector<LabeledImage>& val_split, const ClassTaxonomy& tax,
                             const std::vector<uint64_t>& seeds,
                             const std::vector<MethodArtifacts>& per_seed);

// report.json payload: {method, dataset, seeds, metrics, timing (null here;
// bench-time owns wall-clock numbers), config_hash} plus per-seed values,
// the pixel-pooling convention and published full-scale reference numbers.
nlohmann::json method_report_json(const MethodResult& r, const std::string& dataset,
                                  const std::string& cfg_hash);

void write_summary_csv(const std::filesystem::path& path, const std::vector<MethodResult>& results);

struct TimingReport {
  double backbone_ms = 0.0;  // median
  double metacog_ms = 0.0;
  double total_ms = 0.0;
  double ratio = 0.0;  // metacog / backbone
  int height = 0, width = 0;
  int warmup = 0, iters = 0;
  bool low_confidence = false;
  std::string device;
};

// Median wall-clock per stage over `iters` timed full-pipeline passes after
// `warmup` untimed ones. iters < 2 or warmup < 1 flags the report
// low-confidence.
TimingReport benchmark_inference_time(SegModel& backbone, MetacogModel& metacog, int height,
                                      int width, int warmup, int iters);

nlohmann::json timing_report_json(const TimingReport& t, const std::string& cfg_hash);

}  // namespace memos
