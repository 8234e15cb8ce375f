#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "nlohmann/json.hpp"

#include "memos/errors.hpp"
#include "memos/evaluate.hpp"
#include "memos/image.hpp"
#include "memos/run_config.hpp"
#include "test_util.hpp"

using namespace memos;
using memos::test::TempDir;
using memos::test::slurp;
namespace fs = std::filesystem;

namespace {

const char* kCli = MEMOS_CLI_PATH;
const std::string kMiniConfig = std::string(MEMOS_CONFIG_DIR) + "/mini.json";

struct CliResult {
  int exit_code = -1;
  std::string out, err;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path base = fs::temp_directory_path() / ("memos_cli_io_" + std::to_string(::getpid()));
  fs::create_directories(base);
  const fs::path out = base / ("out_" + std::to_string(counter));
  const fs::path err = base / ("err_" + std::to_string(counter));
  ++counter;
  const std::string cmd =
      std::string(kCli) + " " + args + " > " + out.string() + " 2> " + err.string();
  const int rc = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

nlohmann::json error_json(const CliResult& r) {
  REQUIRE_FALSE(r.err.empty());
  return nlohmann::json::parse(r.err);
}

// One completed mini-scale run, built through the real binary and shared by
// the read-only tests below.
struct Fixture {
  TempDir dir{"cli_fixture"};
  std::string out_flag;

  Fixture() {
    out_flag = " --config " + kMiniConfig + " --out " + dir.path().string();
    for (const char* cmd :
         {"gen-data", "gen-synth", "train-seg", "finetune-maxent", "train-metacog", "evaluate"}) {
      CliResult r = run_cli(std::string(cmd) + out_flag);
      if (r.exit_code != 0) {
        MESSAGE("stage ", cmd, " failed: ", r.err);
        REQUIRE(r.exit_code == 0);
      }
    }
  }
};

const Fixture& fixture() {
  static Fixture f;
  return f;
}

void copy_run(const fs::path& from, const fs::path& to) {
  fs::copy(from, to, fs::copy_options::recursive);
}

RunConfig mini_config(const std::string& out) {
  return load_run_config(kMiniConfig, nlohmann::json(), std::nullopt, out);
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("usage errors exit 2 with machine-readable JSON") {
  CliResult none = run_cli("");
  CHECK(none.exit_code == 2);
  CHECK(error_json(none)["error"] == "usage");

  CliResult missing = run_cli("evaluate");
  CHECK(missing.exit_code == 2);
  CHECK(error_json(missing)["error"] == "usage");

  CliResult unknown = run_cli("frobnicate --config " + kMiniConfig);
  CHECK(unknown.exit_code == 2);
}

TEST_CASE("config errors: missing file and unknown key") {
  CliResult gone = run_cli("gen-data --config /nonexistent.json --out /tmp/x");
  CHECK(gone.exit_code == 2);  // CLI11 ExistingFile check

  TempDir d("cli_badcfg");
  const fs::path bad = d.path() / "bad.json";
  std::ofstream(bad) << R"({"seed": 1, "data": {"heihgt": 32}})";
  CliResult r = run_cli("gen-data --config " + bad.string() + " --out " + d.path().string());
  CHECK(r.exit_code == 1);
  nlohmann::json e = error_json(r);
  CHECK(e["error"] == "config");
  CHECK(e["message"].get<std::string>().find("heihgt") != std::string::npos);
}

TEST_CASE("stage hashes cover exactly their upstream scopes") {
  RunConfig a = mini_config("/tmp/run_a");
  RunConfig b = a;

  // `out` is never part of any hash.
  b.out = "/tmp/run_elsewhere";
  CHECK(config_hash(a) == config_hash(b));
  CHECK(stage_hash(a, "data") == stage_hash(b, "data"));

  // The global seed is part of every stage hash.
  b = a;
  b.seed = 99;
  for (const char* st : {"data", "synth", "seg", "maxent", "metacog", "eval"})
    CHECK(stage_hash(a, st) != stage_hash(b, st));

  // Downstream knobs leave upstream stages untouched.
  b = a;
  b.seg.epochs += 1;
  CHECK(stage_hash(a, "data") == stage_hash(b, "data"));
  CHECK(stage_hash(a, "synth") == stage_hash(b, "synth"));
  CHECK(stage_hash(a, "seg") != stage_hash(b, "seg"));
  CHECK(stage_hash(a, "maxent") != stage_hash(b, "maxent"));

  b = a;
  b.metacog.epochs += 1;
  CHECK(stage_hash(a, "maxent") == stage_hash(b, "maxent"));
  CHECK(stage_hash(a, "metacog") != stage_hash(b, "metacog"));

  // Upstream knobs invalidate everything downstream.
  b = a;
  b.data.height = 64;
  for (const char* st : {"data", "synth", "seg", "maxent", "metacog", "eval"})
    CHECK(stage_hash(a, st) != stage_hash(b, st));

  // Synth settings do not touch the plain backbone.
  b = a;
  b.synth.blur_sigma = 9.0;
  CHECK(stage_hash(a, "seg") == stage_hash(b, "seg"));
  CHECK(stage_hash(a, "maxent") != stage_hash(b, "maxent"));
}

TEST_CASE("dependent commands fail fast, naming the missing stage's command") {
  TempDir d("cli_dep");
  CliResult r = run_cli("evaluate --config " + kMiniConfig + " --out " + d.path().string());
  CHECK(r.exit_code == 1);
  nlohmann::json e = error_json(r);
  CHECK(e["error"] == "dependency");
  CHECK(e["message"].get<std::string>().find("gen-data") != std::string::npos);
}

TEST_CASE("evaluate without train-metacog names it for the MEMOS preset") {
  const Fixture& f = fixture();
  TempDir d("cli_dep_meta");
  const fs::path clone = d.path() / "run";
  copy_run(f.dir.path(), clone);
  RunConfig cfg = mini_config(clone.string());
  for (uint64_t s : cfg.eval.seeds) {
    fs::remove_all(clone / ("seed_" + std::to_string(s)) / "checkpoints" / "metacog_base");
    fs::remove_all(clone / ("seed_" + std::to_string(s)) / "checkpoints" / "metacog_maxent");
  }
  CliResult r = run_cli("evaluate --config " + kMiniConfig + " --out " + clone.string());
  CHECK(r.exit_code == 1);
  nlohmann::json e = error_json(r);
  CHECK(e["error"] == "dependency");
  CHECK(e["message"].get<std::string>().find("train-metacog") != std::string::npos);
}

TEST_CASE("config drift between stages is reported as staleness") {
  const Fixture& f = fixture();
  TempDir d("cli_stale");
  const fs::path clone = d.path() / "run";
  copy_run(f.dir.path(), clone);
  CliResult r =
      run_cli("evaluate --config " + kMiniConfig + " --seed 8 --out " + clone.string());
  CHECK(r.exit_code == 1);
  CHECK(error_json(r)["error"] == "staleness");
}

TEST_CASE("reports embed the config hash and seed; equal configs give equal bytes") {
  const Fixture& f = fixture();
  const RunConfig cfg = mini_config(f.dir.path().string());

  const fs::path rep_path = f.dir.path() / "reports" / "report_entropy.json";
  REQUIRE(fs::exists(rep_path));
  nlohmann::json rep = nlohmann::json::parse(slurp(rep_path));
  CHECK(rep["config_hash"] == config_hash(cfg));
  CHECK(rep["seeds"] == nlohmann::json(cfg.eval.seeds));
  CHECK(rep["method"] == "entropy");
  CHECK(rep["metrics"]["auprc"].contains("mean"));
  CHECK(rep["timing"].is_null());
  // Single seed: no across-seed std.
  CHECK(rep["metrics"]["auprc"]["std"].is_null());

  // A second full run from the same config matches byte for byte.
  TempDir d("cli_det");
  const std::string out2 = " --config " + kMiniConfig + " --out " + d.path().string();
  for (const char* cmd :
       {"gen-data", "gen-synth", "train-seg", "finetune-maxent", "train-metacog", "evaluate"}) {
    CliResult r = run_cli(std::string(cmd) + out2);
    REQUIRE(r.exit_code == 0);
  }
  for (const char* name : {"report_entropy.json", "report_memos.json", "summary.csv"}) {
    const std::string a = slurp(f.dir.path() / "reports" / name);
    const std::string b = slurp(d.path() / "reports" / name);
    REQUIRE_FALSE(a.empty());
    REQUIRE_MESSAGE(a == b, name);
  }
}

TEST_CASE("rerunning a stage overwrites with identical bytes") {
  const Fixture& f = fixture();
  const fs::path rep = f.dir.path() / "reports" / "report_memos.json";
  const std::string before = slurp(rep);
  CliResult r = run_cli("evaluate" + f.out_flag);
  REQUIRE(r.exit_code == 0);
  CHECK(slurp(rep) == before);
}

TEST_CASE("bench-time writes a coherent timing report") {
  const Fixture& f = fixture();
  CliResult r = run_cli("bench-time" + f.out_flag);
  REQUIRE(r.exit_code == 0);
  nlohmann::json t = nlohmann::json::parse(slurp(f.dir.path() / "reports" / "timing.json"));
  const double backbone = t["backbone_ms"].get<double>();
  const double metacog = t["metacog_ms"].get<double>();
  const double total = t["total_ms"].get<double>();
  CHECK(total >= backbone);
  CHECK(total >= metacog);
  CHECK(t["low_confidence"] == false);  // mini config: warmup 1, iters 3
  CHECK(t["config_hash"] == config_hash(mini_config(f.dir.path().string())));
}

TEST_CASE("infer emits mask artifacts deterministically") {
  const Fixture& f = fixture();
  // Any RGB PNG works; reuse a generated ood image.
  fs::path img;
  for (const auto& e : fs::directory_iterator(f.dir.path() / "data" / "images" / "ood")) {
    img = e.path();
    break;
  }
  REQUIRE_FALSE(img.empty());
  CliResult r = run_cli("infer --image " + img.string() + f.out_flag);
  REQUIRE(r.exit_code == 0);
  const fs::path mask_png = f.dir.path() / "reports" / "infer" / (img.stem().string() + "_mask.png");
  const fs::path mask_npy = f.dir.path() / "reports" / "infer" / (img.stem().string() + "_mask.npy");
  REQUIRE(fs::exists(mask_png));
  REQUIRE(fs::exists(mask_npy));
  const std::string first = slurp(mask_npy);
  CliResult r2 = run_cli("infer --image " + img.string() + f.out_flag);
  REQUIRE(r2.exit_code == 0);
  CHECK(slurp(mask_npy) == first);

  LabelMap m = read_png_gray(mask_png);
  CHECK(m.h > 0);
  CHECK(m.w > 0);
}

TEST_CASE("run-ablation emits the four-preset comparison table") {
  const Fixture& f = fixture();
  CliResult r = run_cli("run-ablation" + f.out_flag);
  REQUIRE(r.exit_code == 0);
  const std::string csv = slurp(f.dir.path() / "reports" / "ablation.csv");
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  CHECK(line == "method,auprc_mean,auprc_std,fpr95_mean,fpr95_std,val_miou_mean,val_miou_std");
  std::vector<std::string> rows;
  while (std::getline(is, line))
    if (!line.empty()) rows.push_back(line);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].rfind("entropy,", 0) == 0);
  CHECK(rows[1].rfind("metacog_only,", 0) == 0);
  CHECK(rows[2].rfind("maxent,", 0) == 0);
  CHECK(rows[3].rfind("memos,", 0) == 0);
  for (const auto& row : rows) {
    // 7 comma-separated fields per row.
    CHECK(std::count(row.begin(), row.end(), ',') == 6);
  }
}

TEST_CASE("benchmark timing scales with resolution and flags thin sampling") {
  SegModelConfig sc;
  sc.num_classes = 6;
  sc.depth = 2;
  sc.base_width = 8;
  sc.seed = 1;
  SegModel backbone(sc);
  MetacogModelConfig mc;
  mc.depth = 2;
  mc.base_width = 8;
  mc.seed = 2;
  mc.num_classes = 6;
  MetacogModel meta(mc);

  TimingReport small = benchmark_inference_time(backbone, meta, 32, 32, 0, 1);
  CHECK(small.low_confidence);  // iters=1, warmup=0
  CHECK(small.total_ms >= small.backbone_ms);
  CHECK(small.total_ms >= small.metacog_ms);

  TimingReport big = benchmark_inference_time(backbone, meta, 64, 64, 0, 1);
  CHECK(big.total_ms > small.total_ms);
}

TEST_SUITE_END();
