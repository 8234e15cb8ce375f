#include "memos/run_config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "memos/errors.hpp"
#include "memos/rng.hpp"

namespace memos {
namespace {

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& scope) {
  if (!j.is_object()) throw ConfigError(scope + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError("unknown config key " + scope + "." + key);
}

template <typename T>
T field(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config key ") + key + " has the wrong type");
  }
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return buf;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  check_keys(j, {"seed", "out", "data", "synth", "seg", "maxent", "metacog", "eval"}, "config");
  RunConfig cfg;
  cfg.seed = field<uint64_t>(j, "seed", cfg.seed);
  cfg.out = field<std::string>(j, "out", "");

  if (j.contains("data")) {
    const nlohmann::json& d = j.at("data");
    check_keys(d,
               {"height", "width", "num_classes", "train_count", "val_count", "ood_count",
                "metacog_count", "ambiguity"},
               "data");
    cfg.data.height = field(d, "height", cfg.data.height);
    cfg.data.width = field(d, "width", cfg.data.width);
    cfg.data.num_classes = field(d, "num_classes", cfg.data.num_classes);
    cfg.data.train_count = field(d, "train_count", cfg.data.train_count);
    cfg.data.val_count = field(d, "val_count", cfg.data.val_count);
    cfg.data.ood_count = field(d, "ood_count", cfg.data.ood_count);
    cfg.data.metacog_count = field(d, "metacog_count", cfg.data.metacog_count);
    cfg.data.ambiguity = field(d, "ambiguity", cfg.data.ambiguity);
  }
  if (j.contains("synth")) {
    const nlohmann::json& s = j.at("synth");
    check_keys(s, {"subset_size", "sample_count", "blur_sigma", "kernel_size"}, "synth");
    cfg.synth.subset_size = field(s, "subset_size", cfg.synth.subset_size);
    cfg.synth.sample_count = field(s, "sample_count", cfg.synth.sample_count);
    cfg.synth.blur_sigma = field(s, "blur_sigma", cfg.synth.blur_sigma);
    cfg.synth.kernel_size = field(s, "kernel_size", cfg.synth.kernel_size);
  }
  if (j.contains("seg")) {
    const nlohmann::json& s = j.at("seg");
    check_keys(s, {"depth", "base_width", "epochs", "lr", "batch"}, "seg");
    cfg.seg.depth = field(s, "depth", cfg.seg.depth);
    cfg.seg.base_width = field(s, "base_width", cfg.seg.base_width);
    cfg.seg.epochs = field(s, "epochs", cfg.seg.epochs);
    cfg.seg.lr = field(s, "lr", cfg.seg.lr);
    cfg.seg.batch = field(s, "batch", cfg.seg.batch);
  }
  if (j.contains("maxent")) {
    const nlohmann::json& m = j.at("maxent");
    check_keys(m, {"lambda", "epochs", "lr", "batch"}, "maxent");
    cfg.maxent.lambda = field(m, "lambda", cfg.maxent.lambda);
    cfg.maxent.epochs = field(m, "epochs", cfg.maxent.epochs);
    cfg.maxent.lr = field(m, "lr", cfg.maxent.lr);
    cfg.maxent.batch = field(m, "batch", cfg.maxent.batch);
  }
  if (j.contains("metacog")) {
    const nlohmann::json& m = j.at("metacog");
    check_keys(m,
               {"depth", "base_width", "epochs", "lr", "batch", "subset", "split",
                "encoding", "normalize_entropy"},
               "metacog");
    cfg.metacog.depth = field(m, "depth", cfg.metacog.depth);
    cfg.metacog.base_width = field(m, "base_width", cfg.metacog.base_width);
    cfg.metacog.epochs = field(m, "epochs", cfg.metacog.epochs);
    cfg.metacog.lr = field(m, "lr", cfg.metacog.lr);
    cfg.metacog.batch = field(m, "batch", cfg.metacog.batch);
    cfg.metacog.subset = field(m, "subset", cfg.metacog.subset);
    cfg.metacog.split = field<std::string>(m, "split", cfg.metacog.split);
    cfg.metacog.encoding = field<std::string>(m, "encoding", cfg.metacog.encoding);
    cfg.metacog.normalize_entropy = field(m, "normalize_entropy", cfg.metacog.normalize_entropy);
  }
  if (j.contains("eval")) {
    const nlohmann::json& e = j.at("eval");
    check_keys(e, {"seeds", "methods", "bench_warmup", "bench_iters"}, "eval");
    cfg.eval.seeds = field(e, "seeds", cfg.eval.seeds);
    cfg.eval.methods = field(e, "methods", cfg.eval.methods);
    cfg.eval.bench_warmup = field(e, "bench_warmup", cfg.eval.bench_warmup);
    cfg.eval.bench_iters = field(e, "bench_iters", cfg.eval.bench_iters);
  }

  if (cfg.eval.seeds.empty()) throw ConfigError("eval.seeds must not be empty");
  if (cfg.metacog.encoding != "scaled_index" && cfg.metacog.encoding != "one_hot")
    throw ConfigError("metacog.encoding must be scaled_index or one_hot");
  if (cfg.metacog.split != "train" && cfg.metacog.split != "metacog")
    throw ConfigError("metacog.split must be train or metacog");
  if (cfg.metacog.split == "metacog" && cfg.data.metacog_count <= 0)
    throw ConfigError("metacog.split=metacog requires data.metacog_count > 0");
  if (cfg.data.ambiguity < 0.0 || cfg.data.ambiguity > 1.0)
    throw ConfigError("data.ambiguity must be in [0, 1]");
  return cfg;
}

nlohmann::json run_config_to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["data"] = {{"height", cfg.data.height},       {"width", cfg.data.width},
               {"num_classes", cfg.data.num_classes}, {"train_count", cfg.data.train_count},
               {"val_count", cfg.data.val_count}, {"ood_count", cfg.data.ood_count},
               {"metacog_count", cfg.data.metacog_count},
               {"ambiguity", cfg.data.ambiguity}};
  j["synth"] = {{"subset_size", cfg.synth.subset_size},
                {"sample_count", cfg.synth.sample_count},
                {"blur_sigma", cfg.synth.blur_sigma},
                {"kernel_size", cfg.synth.kernel_size}};
  j["seg"] = {{"depth", cfg.seg.depth},
              {"base_width", cfg.seg.base_width},
              {"epochs", cfg.seg.epochs},
              {"lr", cfg.seg.lr},
              {"batch", cfg.seg.batch}};
  j["maxent"] = {{"lambda", cfg.maxent.lambda},
                 {"epochs", cfg.maxent.epochs},
                 {"lr", cfg.maxent.lr},
                 {"batch", cfg.maxent.batch}};
  j["metacog"] = {{"depth", cfg.metacog.depth},
                  {"base_width", cfg.metacog.base_width},
                  {"epochs", cfg.metacog.epochs},
                  {"lr", cfg.metacog.lr},
                  {"batch", cfg.metacog.batch},
                  {"subset", cfg.metacog.subset},
                  {"split", cfg.metacog.split},
                  {"encoding", cfg.metacog.encoding},
                  {"normalize_entropy", cfg.metacog.normalize_entropy}};
  j["eval"] = {{"seeds", cfg.eval.seeds},
               {"methods", cfg.eval.methods},
               {"bench_warmup", cfg.eval.bench_warmup},
               {"bench_iters", cfg.eval.bench_iters}};
  return j;
}

RunConfig load_run_config(const std::filesystem::path& file, const nlohmann::json& overrides,
                          std::optional<uint64_t> seed_override,
                          std::optional<std::string> out_override) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config file: " + file.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("unparsable config " + file.string() + ": " + e.what());
  }
  if (!overrides.is_null()) j.merge_patch(overrides);
  RunConfig cfg = run_config_from_json(j);
  if (seed_override) cfg.seed = *seed_override;
  if (out_override) cfg.out = *out_override;
  if (cfg.out.empty())
    throw ConfigError("run directory not set (config key `out` or --out required)");
  return cfg;
}

std::string config_hash(const RunConfig& cfg) {
  return hex64(fnv1a64(run_config_to_json(cfg).dump()));
}

std::string stage_hash(const RunConfig& cfg, const std::string& stage) {
  // Each stage's digest covers its own knobs plus everything upstream.
  static const std::map<std::string, std::set<std::string>> kScopes = {
      {"data", {"data"}},
      {"synth", {"data", "synth"}},
      {"seg", {"data", "seg"}},
      {"maxent", {"data", "synth", "seg", "maxent"}},
      {"metacog", {"data", "synth", "seg", "maxent", "metacog"}},
      {"eval", {"data", "synth", "seg", "maxent", "metacog", "eval"}},
  };
  const auto it = kScopes.find(stage);
  if (it == kScopes.end()) throw ConfigError("unknown pipeline stage: " + stage);
  const nlohmann::json full = run_config_to_json(cfg);
  nlohmann::json scope;
  scope["seed"] = cfg.seed;
  for (const std::string& key : it->second) scope[key] = full.at(key);
  return hex64(fnv1a64(scope.dump()));
}

}  // namespace memos
