// Command-line front end: one subcommand per pipeline stage, all driven by a
// single layered JSON config. Failures surface as one machine-readable JSON
// object on stderr and a nonzero exit code.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "memos/errors.hpp"
#include "memos/pipeline.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "run config JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "override the run seed");
  cmd->add_option("--out", args.out, "override the run directory");
}

memos::RunConfig load(const CommonArgs& args) {
  return memos::load_run_config(args.config, nlohmann::json(), args.seed, args.out);
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic-OOD segmentation lab: data, training, calibration and evaluation"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string infer_image;

  CLI::App* gen_data = app.add_subcommand("gen-data", "generate the procedural dataset");
  CLI::App* gen_synth = app.add_subcommand("gen-synth", "synthesize blur-OOD training sets");
  CLI::App* train_seg = app.add_subcommand("train-seg", "train the segmentation backbone");
  CLI::App* finetune = app.add_subcommand("finetune-maxent",
                                          "entropy-calibrate the backbone on synthetic OOD");
  CLI::App* train_meta = app.add_subcommand("train-metacog", "train the correctness predictor");
  CLI::App* evaluate = app.add_subcommand("evaluate", "score methods on the ood split");
  CLI::App* infer = app.add_subcommand("infer", "run the full detector on one image");
  CLI::App* bench = app.add_subcommand("bench-time", "measure per-stage inference wall-clock");
  CLI::App* ablation = app.add_subcommand("run-ablation",
                                          "run the pipeline and compare the method presets");
  for (CLI::App* cmd : {gen_data, gen_synth, train_seg, finetune, train_meta, evaluate, infer,
                        bench, ablation})
    add_common(cmd, args);
  infer->add_option("--image", infer_image, "input RGB PNG")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help / --version
    print_error("usage", e.what());
    return 2;
  }

  try {
    std::ostream* log = &std::cout;
    const memos::RunConfig cfg = load(args);
    if (gen_data->parsed()) memos::run_gen_data(cfg, log);
    if (gen_synth->parsed()) memos::run_gen_synth(cfg, log);
    if (train_seg->parsed()) memos::run_train_seg(cfg, log);
    if (finetune->parsed()) memos::run_finetune_maxent(cfg, log);
    if (train_meta->parsed()) memos::run_train_metacog(cfg, log);
    if (evaluate->parsed()) memos::run_evaluate(cfg, log);
    if (infer->parsed()) memos::run_infer(cfg, infer_image, log);
    if (bench->parsed()) memos::run_bench_time(cfg, log);
    if (ablation->parsed()) memos::run_ablation(cfg, log);
    return 0;
  } catch (const memos::Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
}
