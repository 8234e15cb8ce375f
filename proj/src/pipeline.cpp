#include "memos/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <utility>

#include "memos/errors.hpp"
#include "memos/maxent.hpp"
#include "memos/metacog.hpp"
#include "memos/metrics.hpp"
#include "memos/plots.hpp"
#include "memos/rng.hpp"
#include "memos/toy_scenes.hpp"

namespace memos {

namespace fs = std::filesystem;

namespace {

void log_line(std::ostream* log, const std::string& s) {
  if (log) *log << s << std::endl;
}

std::string fmt3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

// Sub-seed of one run seed `s`. Keyed by the seed value, not its list
// position, so reordering or extending eval.seeds never shifts streams.
uint64_t run_seed(const RunConfig& cfg, uint64_t s) {
  return derive_seed(cfg.seed, fnv1a64("run_seed"), s);
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << j.dump(2) << "\n";
  if (!out) throw LoadError("cannot write " + path.string());
}

// Provenance block merged into every checkpoint's meta.json.
nlohmann::json run_meta(const RunConfig& cfg, uint64_t s, const char* backbone = nullptr) {
  nlohmann::json j{{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}, {"run_seed", s}};
  if (backbone) j["backbone"] = backbone;
  return j;
}

void wipe_dir(const fs::path& dir) {
  std::error_code ec;
  fs::remove_all(dir, ec);  // drop leftovers from older configs
}

}  // namespace

fs::path RunPaths::seed_dir(uint64_t s) const { return root / ("seed_" + std::to_string(s)); }
fs::path RunPaths::synth(uint64_t s) const { return seed_dir(s) / "synth"; }
fs::path RunPaths::synth_val(uint64_t s) const { return seed_dir(s) / "synth_val"; }
fs::path RunPaths::checkpoint(uint64_t s, const std::string& kind) const {
  return seed_dir(s) / "checkpoints" / kind;
}

RunPaths run_paths(const RunConfig& cfg) {
  if (cfg.out.empty())
    throw ConfigError("run directory is unset; pass --out or set \"out\" in the config");
  RunPaths p;
  p.root = cfg.out;
  p.data = cfg.out / "data";
  p.reports = cfg.out / "reports";
  return p;
}

void write_stage_stamp(const fs::path& dir, const std::string& stage, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_json(dir / "stage.json", nlohmann::json{{"stage", stage},
                                                {"stage_hash", stage_hash(cfg, stage)},
                                                {"config_hash", config_hash(cfg)},
                                                {"seed", cfg.seed}});
}

void require_stage(const fs::path& dir, const std::string& stage, const RunConfig& cfg,
                   const std::string& command) {
  const fs::path stamp = dir / "stage.json";
  if (!fs::exists(stamp))
    throw DependencyError("missing " + stage + " artifacts at " + dir.string() + "; run `memos " +
                          command + "` first");
  nlohmann::json j;
  try {
    std::ifstream in(stamp);
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("unreadable stage stamp " + stamp.string() + ": " + std::string(e.what()));
  }
  const std::string want = stage_hash(cfg, stage);
  const std::string got = j.value("stage_hash", "");
  if (j.value("stage", std::string()) != stage || got != want)
    throw StalenessError(dir.string() + " was produced under a different configuration (stage hash " +
                         got + ", expected " + want + "); rerun `memos " + command + "`");
}

void run_gen_data(const RunConfig& cfg, std::ostream* log) {
  const RunPaths p = run_paths(cfg);
  ToySceneConfig tc;
  tc.height = cfg.data.height;
  tc.width = cfg.data.width;
  tc.num_classes = cfg.data.num_classes;
  tc.ambiguity = cfg.data.ambiguity;
  tc.seed = derive_seed(cfg.seed, fnv1a64("data_stage"));
  tc.splits = {{"train", cfg.data.train_count, false},
               {"val", cfg.data.val_count, false},
               {"ood", cfg.data.ood_count, true}};
  if (cfg.data.metacog_count > 0) tc.splits.push_back({"metacog", cfg.data.metacog_count, false});
  wipe_dir(p.data);
  const DatasetManifest m = generate_toy_scenes(p.data, tc);
  write_stage_stamp(p.data, "data", cfg);
  std::string extra = cfg.data.metacog_count > 0
                          ? " / " + std::to_string(cfg.data.metacog_count) + " metacog"
                          : "";
  log_line(log, "gen-data: " + std::to_string(cfg.data.train_count) + " train / " +
                    std::to_string(cfg.data.val_count) + " val / " +
                    std::to_string(cfg.data.ood_count) + " ood" + extra + " images (" +
                    std::to_string(m.taxonomy.num_classes()) + " classes) at " + p.data.string());
}

void run_gen_synth(const RunConfig& cfg, std::ostream* log) {
  const RunPaths p = run_paths(cfg);
  require_stage(p.data, "data", cfg, "gen-data");
  const DatasetManifest m = load_manifest(p.data);
  const auto train = load_dataset(p.data, "train");
  const auto val = load_dataset(p.data, "val");
  for (uint64_t s : cfg.eval.seeds) {
    SynthConfig sc = cfg.synth;
    sc.seed = derive_seed(run_seed(cfg, s), fnv1a64("synth_stage"));
    const SynthDataset ds = build_synth_dataset(train, m.taxonomy, sc);
    wipe_dir(p.synth(s));
    save_synth_dataset(p.synth(s), ds, m.taxonomy);
    write_stage_stamp(p.synth(s), "synth", cfg);

    // Held-out synthetic set: every val image blurred with the same retained
    // subset, used to measure the calibration effect on unseen images.
    SynthDataset held;
    held.c_sub = ds.c_sub;
    held.blur = ds.blur;
    held.seed = ds.seed;
    held.samples.reserve(val.size());
    for (const auto& sample : val)
      held.samples.push_back(blur_out_classes(sample, ds.c_sub, m.taxonomy.ignore_id, ds.blur));
    wipe_dir(p.synth_val(s));
    save_synth_dataset(p.synth_val(s), held, m.taxonomy);
    write_stage_stamp(p.synth_val(s), "synth", cfg);

    std::string subset = "{";
    for (size_t i = 0; i < ds.c_sub.size(); ++i)
      subset += (i ? "," : "") + std::to_string(ds.c_sub[i]);
    subset += "}";
    log_line(log, "gen-synth: seed " + std::to_string(s) + ": " +
                      std::to_string(ds.samples.size()) + " train + " +
                      std::to_string(held.samples.size()) + " held-out images, retained classes " +
                      subset + ", sigma " + fmt3(ds.blur.sigma));
  }
}

void run_train_seg(const RunConfig& cfg, std::ostream* log) {
  const RunPaths p = run_paths(cfg);
  require_stage(p.data, "data", cfg, "gen-data");
  const DatasetManifest m = load_manifest(p.data);
  const auto train = load_dataset(p.data, "train");
  const auto val = load_dataset(p.data, "val");
  for (uint64_t s : cfg.eval.seeds) {
    const uint64_t rs = run_seed(cfg, s);
    SegModelConfig mc;
    mc.num_classes = m.taxonomy.num_classes();
    mc.depth = cfg.seg.depth;
    mc.base_width = cfg.seg.base_width;
    mc.seed = derive_seed(rs, fnv1a64("seg_model"));
    SegModel model(mc);
    TrainHyperparams hp;
    hp.epochs = cfg.seg.epochs;
    hp.lr = cfg.seg.lr;
    hp.batch = cfg.seg.batch;
    hp.seed = derive_seed(rs, fnv1a64("seg_train"));
    const fs::path dir = p.checkpoint(s, "seg_base");
    log_line(log, "train-seg: seed " + std::to_string(s));
    const TrainResult r =
        train_segmentation(model, train, val, m.taxonomy, hp, dir, run_meta(cfg, s), log);
    write_stage_stamp(dir, "seg", cfg);
    log_line(log, "train-seg: seed " + std::to_string(s) + " done, val mIoU " +
                      fmt3(r.final_val_miou));
  }
}

void run_finetune_maxent(const RunConfig& cfg, std::ostream* log) {
  const RunPaths p = run_paths(cfg);
  require_stage(p.data, "data", cfg, "gen-data");
  const DatasetManifest m = load_manifest(p.data);
  const auto train = load_dataset(p.data, "train");
  const auto val = load_dataset(p.data, "val");
  for (uint64_t s : cfg.eval.seeds) {
    require_stage(p.checkpoint(s, "seg_base"), "seg", cfg, "train-seg");
    require_stage(p.synth(s), "synth", cfg, "gen-synth");
    require_stage(p.synth_val(s), "synth", cfg, "gen-synth");
    SegModel model = load_seg_model(p.checkpoint(s, "seg_base"));
    const SynthDataset ds = load_synth_dataset(p.synth(s));
    const SynthDataset held = load_synth_dataset(p.synth_val(s));
    MaxEntConfig me;
    me.lambda = cfg.maxent.lambda;
    me.epochs = cfg.maxent.epochs;
    me.lr = cfg.maxent.lr;
    me.batch = cfg.maxent.batch;
    me.seed = derive_seed(run_seed(cfg, s), fnv1a64("maxent_train"));
    const fs::path dir = p.checkpoint(s, "seg_maxent");
    log_line(log, "finetune-maxent: seed " + std::to_string(s) + ", lambda " + fmt3(me.lambda));
    const FinetuneReport r = finetune(model, train, ds.samples, m.taxonomy, me, val, held.samples,
                                      dir, run_meta(cfg, s), log);
    write_stage_stamp(dir, "maxent", cfg);
    log_line(log, "finetune-maxent: seed " + std::to_string(s) + " done, held-out synth entropy " +
                      fmt3(r.ood_before.mean) + " -> " + fmt3(r.ood_after.mean) + ", val mIoU " +
                      fmt3(r.miou_before) + " -> " + fmt3(r.miou_after));
  }
}

void run_train_metacog(const RunConfig& cfg, std::ostream* log) {
  const RunPaths p = run_paths(cfg);
  require_stage(p.data, "data", cfg, "gen-data");
  const DatasetManifest m = load_manifest(p.data);
  const auto train = load_dataset(p.data, cfg.metacog.split);
  MetacogFeatureConfig fc;
  fc.encoding =
      cfg.metacog.encoding == "one_hot" ? ClassEncoding::kOneHot : ClassEncoding::kScaledIndex;
  fc.normalize_entropy = cfg.metacog.normalize_entropy;
  for (uint64_t s : cfg.eval.seeds) {
    const uint64_t rs = run_seed(cfg, s);
    require_stage(p.checkpoint(s, "seg_base"), "seg", cfg, "train-seg");
    require_stage(p.checkpoint(s, "seg_maxent"), "maxent", cfg, "finetune-maxent");

    // One subset per seed, shared by both variants so they stay comparable.
    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng subset_rng(derive_seed(rs, fnv1a64("metacog_subset")));
    subset_rng.shuffle(order);
    const size_t take = std::min<size_t>(order.size(), static_cast<size_t>(
                                                           std::max(cfg.metacog.subset, 0)));
    std::vector<LabeledImage> subset;
    subset.reserve(take);
    for (size_t i = 0; i < take; ++i) subset.push_back(train[order[i]]);

    const std::pair<const char*, const char*> variants[] = {{"seg_base", "metacog_base"},
                                                            {"seg_maxent", "metacog_maxent"}};
    for (const auto& [backbone_kind, out_kind] : variants) {
      SegModel backbone = load_seg_model(p.checkpoint(s, backbone_kind));
      MetacogModelConfig mc;
      mc.depth = cfg.metacog.depth;
      mc.base_width = cfg.metacog.base_width;
      mc.num_classes = backbone.config().num_classes;
      mc.features = fc;
      mc.seed = derive_seed(rs, fnv1a64(std::string("metacog_model_") + backbone_kind));
      MetacogModel model(mc);
      TrainHyperparams hp;
      hp.epochs = cfg.metacog.epochs;
      hp.lr = cfg.metacog.lr;
      hp.batch = cfg.metacog.batch;
      hp.seed = derive_seed(rs, fnv1a64(std::string("metacog_train_") + backbone_kind));
      const fs::path dir = p.checkpoint(s, out_kind);
      log_line(log, "train-metacog: seed " + std::to_string(s) + ", backbone " + backbone_kind +
                        ", " + std::to_string(subset.size()) + " images");
      const MetacogTrainResult r = train_metacog(model, backbone, subset, m.taxonomy, hp, dir,
                                                 run_meta(cfg, s, backbone_kind), log);
      write_stage_stamp(dir, "metacog", cfg);
      if (!r.train_bce.empty())
        log_line(log, "train-metacog: seed " + std::to_string(s) + " (" + out_kind +
                          ") done, final bce " + fmt3(r.train_bce.back()));
    }
  }
}

namespace {

struct MethodPlan {
  Method method = Method::kEntropy;
  std::vector<MethodArtifacts> per_seed;
};

// Maps a method onto the checkpoints it scores with and verifies they are
// present and current.
MethodPlan plan_method(const RunConfig& cfg, const RunPaths& p, const std::string& name) {
  MethodPlan plan;
  plan.method = method_from_name(name);
  for (uint64_t s : cfg.eval.seeds) {
    MethodArtifacts a;
    switch (plan.method) {
      case Method::kEntropy:
      case Method::kSoftmax:
      case Method::kEnsemble:
        require_stage(p.checkpoint(s, "seg_base"), "seg", cfg, "train-seg");
        a.backbone = p.checkpoint(s, "seg_base");
        break;
      case Method::kMaxEnt:
        require_stage(p.checkpoint(s, "seg_maxent"), "maxent", cfg, "finetune-maxent");
        a.backbone = p.checkpoint(s, "seg_maxent");
        break;
      case Method::kMetacogOnly:
        require_stage(p.checkpoint(s, "seg_base"), "seg", cfg, "train-seg");
        require_stage(p.checkpoint(s, "metacog_base"), "metacog", cfg, "train-metacog");
        a.backbone = p.checkpoint(s, "seg_base");
        a.metacog = p.checkpoint(s, "metacog_base");
        break;
      case Method::kMemos:
        require_stage(p.checkpoint(s, "seg_maxent"), "maxent", cfg, "finetune-maxent");
        require_stage(p.checkpoint(s, "metacog_maxent"), "metacog", cfg, "train-metacog");
        a.backbone = p.checkpoint(s, "seg_maxent");
        a.metacog = p.checkpoint(s, "metacog_maxent");
        break;
    }
    plan.per_seed.push_back(std::move(a));
  }
  return plan;
}

// First-seed per-pixel scores squashed into [0,1] for a qualitative overlay.
std::vector<double> overlay_scores(Method m, const std::vector<MethodArtifacts>& per_seed,
                                   const ImageU8& image) {
  auto probs_of = [&image](const fs::path& dir) {
    SegModel model = load_seg_model(dir);
    return softmax(model.forward_padded(normalize_image(image)));
  };
  switch (m) {
    case Method::kSoftmax:
      return score_softmax(probs_of(per_seed.front().backbone)).v;
    case Method::kEntropy:
    case Method::kMaxEnt: {
      const ProbabilityMap probs = probs_of(per_seed.front().backbone);
      ScoreMap sm = score_entropy(probs);
      const double lnk = std::log(static_cast<double>(probs.k));
      for (double& v : sm.v) v /= lnk;
      return sm.v;
    }
    case Method::kEnsemble: {
      std::vector<ProbabilityMap> members;
      members.reserve(per_seed.size());
      for (const auto& a : per_seed) members.push_back(probs_of(a.backbone));
      std::vector<const ProbabilityMap*> ptrs;
      for (const auto& pm : members) ptrs.push_back(&pm);
      ScoreMap sm = score_ensemble(ptrs);
      const double lnk = std::log(static_cast<double>(members.front().k));
      for (double& v : sm.v) v /= lnk;
      return sm.v;
    }
    case Method::kMetacogOnly:
    case Method::kMemos: {
      SegModel backbone = load_seg_model(per_seed.front().backbone);
      MetacogModel metacog = load_metacog_model(per_seed.front().metacog);
      return infer_ood_mask(metacog, backbone, image).v;
    }
  }
  return {};
}

// Shared by evaluate and run-ablation; writes per-method reports and plots
// under reports_dir but leaves summary tables to the caller.
std::vector<MethodResult> evaluate_into(const RunConfig& cfg, const fs::path& reports_dir,
                                        std::ostream* log) {
  const RunPaths p = run_paths(cfg);
  require_stage(p.data, "data", cfg, "gen-data");
  const DatasetManifest m = load_manifest(p.data);
  const auto ood = load_dataset(p.data, "ood");
  const auto val = load_dataset(p.data, "val");
  fs::create_directories(reports_dir / "plots");
  std::vector<MethodResult> results;
  for (const std::string& name : cfg.eval.methods) {
    const MethodPlan plan = plan_method(cfg, p, name);
    MethodResult r = evaluate_method(plan.method, ood, val, m.taxonomy, cfg.eval.seeds,
                                     plan.per_seed);
    write_json(reports_dir / ("report_" + name + ".json"),
               method_report_json(r, "toy/ood", config_hash(cfg)));
    plot_histogram(reports_dir / "plots" / ("score_hist_" + name + ".png"),
                   name + ": pixel score distribution", r.score_range.first,
                   r.score_range.second, {{"ID", r.id_score_hist}, {"OOD", r.ood_score_hist}});
    if (!ood.empty())
      plot_mask_overlay(reports_dir / "plots" / ("overlay_" + name + ".png"), ood.front().image,
                        overlay_scores(plan.method, plan.per_seed, ood.front().image));
    log_line(log, "evaluate: " + name + " auprc " + fmt3(r.auprc.mean) + ", fpr95 " +
                      fmt3(r.fpr95.mean) + ", val mIoU " + fmt3(r.val_miou.mean));
    results.push_back(std::move(r));
  }
  return results;
}

void write_pr_plot(const fs::path& path, const std::vector<MethodResult>& results) {
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> curves;
  for (const auto& r : results)
    if (!r.pr_points.empty()) curves.emplace_back(r.method, r.pr_points);
  if (!curves.empty()) plot_pr_curve(path, "precision-recall (ood split)", curves);
}

}  // namespace

std::vector<MethodResult> run_evaluate(const RunConfig& cfg, std::ostream* log) {
  const RunPaths p = run_paths(cfg);
  std::vector<MethodResult> results = evaluate_into(cfg, p.reports, log);
  write_summary_csv(p.reports / "summary.csv", results);
  write_pr_plot(p.reports / "plots" / "pr_curves.png", results);
  return results;
}

std::filesystem::path run_infer(const RunConfig& cfg, const fs::path& image_path,
                                std::ostream* log) {
  const RunPaths p = run_paths(cfg);
  const uint64_t s = cfg.eval.seeds.front();
  require_stage(p.checkpoint(s, "seg_maxent"), "maxent", cfg, "finetune-maxent");
  require_stage(p.checkpoint(s, "metacog_maxent"), "metacog", cfg, "train-metacog");
  SegModel backbone = load_seg_model(p.checkpoint(s, "seg_maxent"));
  MetacogModel metacog = load_metacog_model(p.checkpoint(s, "metacog_maxent"));
  const ImageU8 image = read_png_rgb(image_path);
  const SoftOODMask mask = infer_ood_mask(metacog, backbone, image);

  const fs::path dir = p.reports / "infer";
  fs::create_directories(dir);
  const std::string stem = image_path.stem().string();
  LabelMap mask8(mask.h, mask.w);
  for (size_t i = 0; i < mask.v.size(); ++i)
    mask8.v[i] = static_cast<uint8_t>(std::lround(std::clamp(mask.v[i], 0.0, 1.0) * 255.0));
  const fs::path mask_path = dir / (stem + "_mask.png");
  write_png(mask_path, mask8);
  write_npy(dir / (stem + "_mask.npy"), mask.v, mask.h, mask.w);
  plot_mask_overlay(dir / (stem + "_overlay.png"), image, mask.v);
  double peak = 0.0;
  for (double v : mask.v) peak = std::max(peak, v);
  log_line(log, "infer: wrote " + mask_path.string() + " (peak score " + fmt3(peak) + ")");
  return mask_path;
}

TimingReport run_bench_time(const RunConfig& cfg, std::ostream* log) {
  const RunPaths p = run_paths(cfg);
  const uint64_t s = cfg.eval.seeds.front();
  require_stage(p.checkpoint(s, "seg_maxent"), "maxent", cfg, "finetune-maxent");
  require_stage(p.checkpoint(s, "metacog_maxent"), "metacog", cfg, "train-metacog");
  SegModel backbone = load_seg_model(p.checkpoint(s, "seg_maxent"));
  MetacogModel metacog = load_metacog_model(p.checkpoint(s, "metacog_maxent"));
  const TimingReport t = benchmark_inference_time(backbone, metacog, cfg.data.height,
                                                  cfg.data.width, cfg.eval.bench_warmup,
                                                  cfg.eval.bench_iters);
  write_json(p.reports / "timing.json", timing_report_json(t, config_hash(cfg)));
  log_line(log, "bench-time: backbone " + fmt3(t.backbone_ms) + " ms, metacog " +
                    fmt3(t.metacog_ms) + " ms, ratio " + fmt3(t.ratio) +
                    (t.low_confidence ? " (low confidence)" : ""));
  return t;
}

std::vector<MethodResult> run_ablation(const RunConfig& cfg, std::ostream* log) {
  const RunPaths p = run_paths(cfg);

  // Bring every upstream stage up to date before comparing presets.
  auto ensure = [&](const std::string& stage, const std::vector<fs::path>& dirs,
                    const std::function<void()>& runner) {
    for (const auto& d : dirs) {
      try {
        require_stage(d, stage, cfg, "run-ablation");
      } catch (const Error& e) {
        if (e.kind() != "dependency" && e.kind() != "staleness") throw;
        runner();
        return;
      }
    }
  };
  std::vector<fs::path> synth_dirs, seg_dirs, maxent_dirs, metacog_dirs;
  for (uint64_t s : cfg.eval.seeds) {
    synth_dirs.push_back(p.synth(s));
    synth_dirs.push_back(p.synth_val(s));
    seg_dirs.push_back(p.checkpoint(s, "seg_base"));
    maxent_dirs.push_back(p.checkpoint(s, "seg_maxent"));
    metacog_dirs.push_back(p.checkpoint(s, "metacog_base"));
    metacog_dirs.push_back(p.checkpoint(s, "metacog_maxent"));
  }
  ensure("data", {p.data}, [&] { run_gen_data(cfg, log); });
  ensure("synth", synth_dirs, [&] { run_gen_synth(cfg, log); });
  ensure("seg", seg_dirs, [&] { run_train_seg(cfg, log); });
  ensure("maxent", maxent_dirs, [&] { run_finetune_maxent(cfg, log); });
  ensure("metacog", metacog_dirs, [&] { run_train_metacog(cfg, log); });

  // Each preset is a config diff selecting a single method, applied the same
  // way CLI overrides are.
  const std::vector<std::string> presets = {"entropy", "metacog_only", "maxent", "memos"};
  std::vector<MethodResult> results;
  for (const std::string& preset : presets) {
    nlohmann::json j = run_config_to_json(cfg);
    nlohmann::json patch;
    patch["eval"]["methods"] = nlohmann::json::array({preset});
    j.merge_patch(patch);
    RunConfig pc = run_config_from_json(j);
    pc.out = cfg.out;
    std::vector<MethodResult> r = evaluate_into(pc, p.reports / "ablation", log);
    results.insert(results.end(), std::make_move_iterator(r.begin()),
                   std::make_move_iterator(r.end()));
  }
  write_summary_csv(p.reports / "ablation.csv", results);
  write_pr_plot(p.reports / "ablation" / "plots" / "pr_curves.png", results);
  log_line(log, "run-ablation: wrote " + (p.reports / "ablation.csv").string());
  return results;
}

}  // namespace memos
