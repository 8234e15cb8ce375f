#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"

#include "memos/synth_ood.hpp"

namespace memos {

struct DataStageConfig {
  int height = 48;
  int width = 48;
  int num_classes = 8;
  int train_count = 96;
  int val_count = 24;
  int ood_count = 24;
  // Extra in-distribution split reserved for correctness-predictor training.
  // 0 disables it; the predictor then draws from the train split instead.
  int metacog_count = 0;
  double ambiguity = 0.0;  // per-instance appearance drift, see ToySceneConfig
};

struct SegStageConfig {
  int depth = 3;
  int base_width = 12;
  int epochs = 16;
  double lr = 2e-3;
  int batch = 8;
};

struct MaxEntStageConfig {
  double lambda = 1.0;
  int epochs = 6;
  double lr = 5e-4;
  int batch = 8;
};

struct MetacogStageConfig {
  int depth = 3;
  int base_width = 10;
  int epochs = 14;
  double lr = 2e-3;
  int batch = 8;
  int subset = 500;  // images drawn from `split` (all, if fewer)
  // In-distribution split the training subset is drawn from. A split the
  // backbone never trained on gives the predictor realistic error masks;
  // "train" reproduces the full-scale recipe where the backbone does not
  // memorize its training images anyway.
  std::string split = "train";
  std::string encoding = "scaled_index";
  bool normalize_entropy = true;
};

struct EvalStageConfig {
  std::vector<uint64_t> seeds = {1, 2, 3};
  std::vector<std::string> methods = {"entropy", "softmax",  "maxent",
                                      "metacog_only", "memos", "ensemble"};
  int bench_warmup = 3;
  int bench_iters = 10;
};

// One layered config drives every pipeline stage. The run directory is
// deliberately excluded from hashing so identical configs produce identical
// artifacts regardless of where they land.
struct RunConfig {
  uint64_t seed = 1;
  std::filesystem::path out;
  DataStageConfig data;
  SynthConfig synth;  // seed field unused here; stages derive their own
  SegStageConfig seg;
  MaxEntStageConfig maxent;
  MetacogStageConfig metacog;
  EvalStageConfig eval;
};

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);  // canonical, no `out`

// Reads the config file, applies a JSON merge patch (preset overrides), then
// the CLI-level seed/out overrides. Unknown keys throw ConfigError.
RunConfig load_run_config(const std::filesystem::path& file,
                          const nlohmann::json& overrides = nlohmann::json(),
                          std::optional<uint64_t> seed_override = std::nullopt,
                          std::optional<std::string> out_override = std::nullopt);

// 16-hex-digit digest of the canonical config JSON.
std::string config_hash(const RunConfig& cfg);

// Digest scoped to one stage plus everything upstream of it, so editing a
// downstream knob never invalidates upstream artifacts. Stages: data, synth,
// seg, maxent, metacog, eval.
std::string stage_hash(const RunConfig& cfg, const std::string& stage);

}  // namespace memos
