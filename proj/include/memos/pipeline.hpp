#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "memos/evaluate.hpp"
#include "memos/run_config.hpp"

namespace memos {

// Run-directory layout. Every stage writes into its own subtree and stamps it
// with stage.json so downstream commands can detect missing or stale inputs.
//
//   <out>/data/                      procedural dataset (train/val/ood splits)
//   <out>/seed_<s>/synth/            synthetic-OOD training set (from train)
//   <out>/seed_<s>/synth_val/        held-out synthetic set (from val, same C_sub)
//   <out>/seed_<s>/checkpoints/seg_base/        CE-trained backbone
//   <out>/seed_<s>/checkpoints/seg_maxent/      entropy-calibrated backbone
//   <out>/seed_<s>/checkpoints/metacog_base/    correctness net on seg_base
//   <out>/seed_<s>/checkpoints/metacog_maxent/  correctness net on seg_maxent
//   <out>/reports/                   report_<method>.json, summary.csv,
//                                    timing.json, ablation/, plots/, infer/
struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path data;
  std::filesystem::path reports;

  std::filesystem::path seed_dir(uint64_t s) const;
  std::filesystem::path synth(uint64_t s) const;
  std::filesystem::path synth_val(uint64_t s) const;
  std::filesystem::path checkpoint(uint64_t s, const std::string& kind) const;
};

RunPaths run_paths(const RunConfig& cfg);

// Stamps `dir` as holding up-to-date artifacts of `stage` under cfg.
void write_stage_stamp(const std::filesystem::path& dir, const std::string& stage,
                       const RunConfig& cfg);

// Throws DependencyError when the stamp is missing (naming `command`) and
// StalenessError when the stamp's stage hash disagrees with cfg.
void require_stage(const std::filesystem::path& dir, const std::string& stage,
                   const RunConfig& cfg, const std::string& command);

// Stage runners shared by the CLI and the acceptance harness. Each reruns
// from scratch (outputs are overwritten) and stamps its artifact dirs.
void run_gen_data(const RunConfig& cfg, std::ostream* log = nullptr);
void run_gen_synth(const RunConfig& cfg, std::ostream* log = nullptr);
void run_train_seg(const RunConfig& cfg, std::ostream* log = nullptr);
void run_finetune_maxent(const RunConfig& cfg, std::ostream* log = nullptr);
void run_train_metacog(const RunConfig& cfg, std::ostream* log = nullptr);

// Evaluates cfg.eval.methods on the ood split, writing report_<method>.json,
// summary.csv and plots (PR curves, score histograms, mask overlays) under
// <out>/reports/.
std::vector<MethodResult> run_evaluate(const RunConfig& cfg, std::ostream* log = nullptr);

// Full detector (calibrated backbone + its correctness net, first seed) on a
// single image. Emits <stem>_mask.png (values x255), <stem>_mask.npy (raw
// float64) and <stem>_overlay.png under <out>/reports/infer/, returning the
// mask path.
std::filesystem::path run_infer(const RunConfig& cfg, const std::filesystem::path& image_path,
                                std::ostream* log = nullptr);

// Wall-clock benchmark of the full detector at the configured resolution;
// writes <out>/reports/timing.json.
TimingReport run_bench_time(const RunConfig& cfg, std::ostream* log = nullptr);

// Runs any missing/stale upstream stage, then evaluates the four comparison
// presets (entropy, metacog_only, maxent, memos) and writes the combined
// table to <out>/reports/ablation.csv plus per-preset reports under
// <out>/reports/ablation/.
std::vector<MethodResult> run_ablation(const RunConfig& cfg, std::ostream* log = nullptr);

}  // namespace memos
