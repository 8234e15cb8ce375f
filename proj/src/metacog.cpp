#include "memos/metacog.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "memos/errors.hpp"
#include "memos/nn/adam.hpp"
#include "memos/nn/checkpoint.hpp"
#include "memos/rng.hpp"

namespace memos {

MetacogInput build_metacog_input(const ProbabilityMap& probs, const MetacogFeatureConfig& fc) {
  if (probs.k < 2) throw ConfigError("metacog input needs K >= 2 classes");
  const LabelMap pred = predict_labels(probs);
  const EntropyMap ent = entropy_map(probs);
  const double ln_k = std::log(static_cast<double>(probs.k));

  MetacogInput in;
  in.h = probs.h;
  in.w = probs.w;
  in.channels = (fc.encoding == ClassEncoding::kOneHot ? probs.k : 1) + 1;
  in.v.assign(static_cast<size_t>(in.channels) * probs.h * probs.w, 0.0);

  for (int y = 0; y < probs.h; ++y)
    for (int x = 0; x < probs.w; ++x) {
      const int cls = pred.at(y, x);
      if (fc.encoding == ClassEncoding::kOneHot)
        in.at(cls, y, x) = 1.0;
      else
        in.at(0, y, x) = static_cast<double>(cls) / static_cast<double>(probs.k - 1);
      const double e = ent.at(y, x);
      in.at(in.channels - 1, y, x) = fc.normalize_entropy ? e / ln_k : e;
    }
  return in;
}

MetacogTarget build_target_mask(const LabelMap& pred_ids, const LabelMap& gt_ids,
                                const ClassTaxonomy& tax) {
  if (pred_ids.h != gt_ids.h || pred_ids.w != gt_ids.w)
    throw ShapeError("prediction and ground truth sizes differ");
  MetacogTarget t;
  t.target = LabelMap(gt_ids.h, gt_ids.w, 0);
  t.loss_mask = LabelMap(gt_ids.h, gt_ids.w, 1);
  for (size_t i = 0; i < gt_ids.v.size(); ++i) {
    if (gt_ids.v[i] == tax.ignore_id) {
      t.loss_mask.v[i] = 0;
      continue;
    }
    if (pred_ids.v[i] != gt_ids.v[i]) t.target.v[i] = 1;
  }
  return t;
}

int MetacogModel::input_channels() const {
  return (cfg_.features.encoding == ClassEncoding::kOneHot ? cfg_.num_classes : 1) + 1;
}

namespace {

nn::UNetConfig metacog_unet(const MetacogModelConfig& cfg) {
  if (cfg.num_classes < 2) throw ConfigError("metacog model needs the backbone K >= 2");
  if (cfg.depth < 2) throw ConfigError("model depth must be >= 2");
  if (cfg.base_width < 8) throw ConfigError("base_width must be >= 8");
  nn::UNetConfig u;
  u.in_channels = (cfg.features.encoding == ClassEncoding::kOneHot ? cfg.num_classes : 1) + 1;
  u.out_channels = 1;
  u.depth = cfg.depth;
  u.base_width = cfg.base_width;
  u.seed = cfg.seed;
  return u;
}

}  // namespace

MetacogModel::MetacogModel(const MetacogModelConfig& cfg) : cfg_(cfg), net_(metacog_unet(cfg)) {}

Tensor metacog_inputs_to_tensor(const std::vector<const MetacogInput*>& inputs) {
  if (inputs.empty()) throw ShapeError("empty metacog input batch");
  const MetacogInput& first = *inputs[0];
  Tensor x({static_cast<int>(inputs.size()), first.channels, first.h, first.w});
  for (size_t n = 0; n < inputs.size(); ++n) {
    const MetacogInput& in = *inputs[n];
    if (in.h != first.h || in.w != first.w || in.channels != first.channels)
      throw ShapeError("metacog input sizes differ within batch");
    for (int c = 0; c < in.channels; ++c)
      for (int y = 0; y < in.h; ++y)
        for (int xx = 0; xx < in.w; ++xx)
          x.at(static_cast<int>(n), c, y, xx) = static_cast<float>(in.at(c, y, xx));
  }
  return x;
}

SoftOODMask sigmoid_mask(const Tensor& logits, int item) {
  if (logits.ndim() != 4 || logits.dim(1) != 1)
    throw ShapeError("sigmoid_mask expects {N,1,H,W} logits");
  SoftOODMask m;
  m.h = logits.dim(2);
  m.w = logits.dim(3);
  m.v.resize(static_cast<size_t>(m.h) * m.w);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      const double z = logits.at(item, 0, y, x);
      m.at(y, x) = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
  return m;
}

double masked_bce(const Tensor& logits, const std::vector<LabelMap>& targets,
                  const std::vector<LabelMap>& masks, Tensor* dlogits) {
  if (logits.ndim() != 4 || logits.dim(1) != 1)
    throw ShapeError("masked_bce expects {N,1,H,W} logits");
  const int n = logits.dim(0), h = logits.dim(2), w = logits.dim(3);
  if (static_cast<int>(targets.size()) != n || static_cast<int>(masks.size()) != n)
    throw ShapeError("one target and one mask per batch item required");

  int64_t count = 0;
  for (int i = 0; i < n; ++i) {
    if (targets[static_cast<size_t>(i)].h != h || targets[static_cast<size_t>(i)].w != w ||
        masks[static_cast<size_t>(i)].h != h || masks[static_cast<size_t>(i)].w != w)
      throw ShapeError("target/mask size differs from logits");
    for (uint8_t m : masks[static_cast<size_t>(i)].v) count += m != 0;
  }
  if (count == 0) throw TrainingError("degenerate batch: every pixel is loss-masked");

  if (dlogits) {
    dlogits->resize(logits.shape());
    dlogits->zero();
  }

  double sum = 0.0;
  const double scale = 1.0 / static_cast<double>(count);
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (masks[static_cast<size_t>(i)].at(y, x) == 0) continue;
        const double z = logits.at(i, 0, y, x);
        const double t = targets[static_cast<size_t>(i)].at(y, x) ? 1.0 : 0.0;
        // BCE(z,t) = max(z,0) - t*z + log(1+exp(-|z|)), grad = sigmoid(z) - t
        sum += std::max(z, 0.0) - t * z + std::log1p(std::exp(-std::abs(z)));
        if (dlogits) {
          const double s =
              z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
          dlogits->at(i, 0, y, x) = static_cast<float>(scale * (s - t));
        }
      }
  return sum * scale;
}

MetacogTrainResult train_metacog(MetacogModel& model, SegModel& backbone,
                                 const std::vector<LabeledImage>& subset, const ClassTaxonomy& tax,
                                 const TrainHyperparams& hp, const std::filesystem::path& out_dir,
                                 const nlohmann::json& extra_meta, std::ostream* log) {
  if (subset.empty()) throw ValidationError("metacog training subset is empty");
  if (model.config().num_classes != backbone.config().num_classes)
    throw CompatibilityError("metacog expects K=" + std::to_string(model.config().num_classes) +
                             ", backbone has K=" + std::to_string(backbone.config().num_classes));
  if (hp.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (hp.batch < 1) throw ConfigError("batch must be >= 1");

  // The backbone is frozen, so its outputs — and hence the metacog inputs and
  // targets — are fixed; compute them once up front.
  struct Item {
    MetacogInput input;
    MetacogTarget target;
  };
  std::vector<Item> items;
  MetacogTrainResult result;
  for (const LabeledImage& s : subset) {
    const ProbabilityMap probs = softmax(backbone.forward(normalize_image(s.image), false));
    MetacogTarget t =
        build_target_mask(indices_to_labels(predict_labels(probs), tax), s.labels, tax);
    bool any = false;
    for (uint8_t m : t.loss_mask.v)
      if (m) {
        any = true;
        break;
      }
    if (!any) {
      ++result.skipped_samples;
      if (log) *log << "warning: sample " << s.id << " is fully ignore-masked; skipping\n";
      continue;
    }
    items.push_back({build_metacog_input(probs, model.config().features), std::move(t)});
  }
  if (items.empty()) throw TrainingError("metacog subset has no supervised pixels");

  std::filesystem::create_directories(out_dir);
  std::ofstream curve(out_dir / "loss_curve.csv");
  if (!curve) throw LoadError("cannot write " + (out_dir / "loss_curve.csv").string());
  curve << "epoch,split,loss\n";
  curve.setf(std::ios::fixed);
  curve.precision(6);

  nn::Adam opt(model.params(), static_cast<float>(hp.lr));
  std::vector<int> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    Rng rng(derive_seed(hp.seed, fnv1a64("metacog_epoch"), static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(hp.batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(hp.batch));
      std::vector<const MetacogInput*> inputs;
      std::vector<LabelMap> targets, masks;
      for (size_t i = start; i < end; ++i) {
        const Item& it = items[static_cast<size_t>(order[i])];
        inputs.push_back(&it.input);
        targets.push_back(it.target.target);
        masks.push_back(it.target.loss_mask);
      }
      Tensor logits = model.forward(metacog_inputs_to_tensor(inputs), true);
      Tensor dlogits;
      const double loss = masked_bce(logits, targets, masks, &dlogits);
      if (!std::isfinite(loss))
        throw TrainingError("metacog loss diverged at epoch " + std::to_string(epoch));
      loss_sum += loss;
      ++batches;
      opt.zero_grad();
      model.backward(dlogits);
      opt.step();
    }
    const double mean_loss = loss_sum / static_cast<double>(batches);
    result.train_bce.push_back(mean_loss);
    curve << epoch << ",train," << mean_loss << '\n';
    if (log) *log << "epoch " << epoch << "  bce " << mean_loss << '\n';
  }

  nlohmann::json meta = extra_meta.is_object() ? extra_meta : nlohmann::json::object();
  meta["kind"] = "metacog";
  meta["model"] = metacog_config_to_json(model.config());
  meta["training"] = {{"epochs", hp.epochs}, {"lr", hp.lr}, {"batch", hp.batch}, {"seed", hp.seed}};
  save_checkpoint(out_dir, model.params(), meta);
  return result;
}

SoftOODMask infer_ood_mask(MetacogModel& metacog, SegModel& backbone, const ImageU8& image) {
  if (metacog.config().num_classes != backbone.config().num_classes)
    throw CompatibilityError(
        "metacog checkpoint expects K=" + std::to_string(metacog.config().num_classes) +
        ", backbone checkpoint has K=" + std::to_string(backbone.config().num_classes));
  const ProbabilityMap probs = softmax(backbone.forward_padded(normalize_image(image)));
  const MetacogInput in = build_metacog_input(probs, metacog.config().features);
  return sigmoid_mask(metacog.forward_padded(metacog_inputs_to_tensor({&in})));
}

nlohmann::json metacog_config_to_json(const MetacogModelConfig& cfg) {
  return {{"depth", cfg.depth},
          {"base_width", cfg.base_width},
          {"seed", cfg.seed},
          {"num_classes", cfg.num_classes},
          {"encoding", cfg.features.encoding == ClassEncoding::kOneHot ? "one_hot" : "scaled_index"},
          {"normalize_entropy", cfg.features.normalize_entropy}};
}

MetacogModelConfig metacog_config_from_json(const nlohmann::json& j) {
  MetacogModelConfig cfg;
  cfg.depth = j.at("depth").get<int>();
  cfg.base_width = j.at("base_width").get<int>();
  cfg.seed = j.value("seed", static_cast<uint64_t>(0));
  cfg.num_classes = j.at("num_classes").get<int>();
  const std::string enc = j.value("encoding", "scaled_index");
  if (enc == "one_hot")
    cfg.features.encoding = ClassEncoding::kOneHot;
  else if (enc == "scaled_index")
    cfg.features.encoding = ClassEncoding::kScaledIndex;
  else
    throw ConfigError("unknown class encoding: " + enc);
  cfg.features.normalize_entropy = j.value("normalize_entropy", true);
  return cfg;
}

MetacogModel load_metacog_model(const std::filesystem::path& ckpt_dir) {
  const nlohmann::json meta = load_checkpoint_meta(ckpt_dir);
  if (!meta.contains("model"))
    throw LoadError("checkpoint metadata lacks model config: " + ckpt_dir.string());
  MetacogModel model(metacog_config_from_json(meta.at("model")));
  load_checkpoint_weights(ckpt_dir, model.params());
  return model;
}

}  // namespace memos
