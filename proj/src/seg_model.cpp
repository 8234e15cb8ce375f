#include "memos/seg_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "memos/errors.hpp"
#include "memos/maxent.hpp"
#include "memos/metrics.hpp"
#include "memos/nn/adam.hpp"
#include "memos/nn/checkpoint.hpp"
#include "memos/rng.hpp"

namespace memos {
namespace {

nn::UNetConfig to_unet(const SegModelConfig& cfg) {
  if (cfg.num_classes < 2) throw ConfigError("segmentation model needs at least 2 classes");
  if (cfg.input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (cfg.depth < 2) throw ConfigError("model depth must be >= 2");
  if (cfg.base_width < 8) throw ConfigError("base_width must be >= 8");
  nn::UNetConfig u;
  u.in_channels = cfg.input_channels;
  u.out_channels = cfg.num_classes;
  u.depth = cfg.depth;
  u.base_width = cfg.base_width;
  u.seed = cfg.seed;
  return u;
}

}  // namespace

SegModel::SegModel(const SegModelConfig& cfg) : cfg_(cfg), net_(to_unet(cfg)) {}

Tensor normalize_images(const std::vector<const ImageU8*>& images) {
  if (images.empty()) throw ShapeError("empty image batch");
  const int h = images[0]->h, w = images[0]->w;
  Tensor x({static_cast<int>(images.size()), 3, h, w});
  for (size_t n = 0; n < images.size(); ++n) {
    const ImageU8& img = *images[n];
    if (img.h != h || img.w != w) throw ShapeError("image sizes differ within batch");
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
          x.at(static_cast<int>(n), c, y, xx) = (img.at(y, xx, c) / 255.0f - 0.5f) * 2.0f;
  }
  return x;
}

Tensor normalize_image(const ImageU8& image) { return normalize_images({&image}); }

ProbabilityMap softmax(const Tensor& logits, int item) {
  if (logits.ndim() != 4) throw ShapeError("softmax expects {N,K,H,W} logits");
  if (item < 0 || item >= logits.dim(0)) throw ShapeError("softmax: item index out of range");
  const int k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  ProbabilityMap p;
  p.h = h;
  p.w = w;
  p.k = k;
  p.v.resize(static_cast<size_t>(h) * w * k);
  std::vector<double> z(static_cast<size_t>(k));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double zmax = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const float raw = logits.at(item, c, y, x);
        if (!std::isfinite(raw)) throw NumericError("non-finite logit at pixel");
        z[static_cast<size_t>(c)] = raw;
        zmax = std::max(zmax, z[static_cast<size_t>(c)]);
      }
      double sum = 0.0;
      for (int c = 0; c < k; ++c) {
        z[static_cast<size_t>(c)] = std::exp(z[static_cast<size_t>(c)] - zmax);
        sum += z[static_cast<size_t>(c)];
      }
      for (int c = 0; c < k; ++c) p.at(y, x, c) = z[static_cast<size_t>(c)] / sum;
    }
  return p;
}

LabelMap predict_labels(const ProbabilityMap& probs) {
  LabelMap out(probs.h, probs.w);
  for (int y = 0; y < probs.h; ++y)
    for (int x = 0; x < probs.w; ++x) {
      const double* row = probs.row(y, x);
      int best = 0;
      for (int c = 1; c < probs.k; ++c)
        if (row[c] > row[best]) best = c;  // strict: ties keep the lowest index
      out.at(y, x) = static_cast<uint8_t>(best);
    }
  return out;
}

LabelMap labels_to_indices(const LabelMap& ids, const ClassTaxonomy& tax) {
  LabelMap out(ids.h, ids.w);
  for (size_t i = 0; i < ids.v.size(); ++i) {
    const int id = ids.v[i];
    if (id == tax.ignore_id || id == tax.ood_id) {
      out.v[i] = 255;
      continue;
    }
    const int idx = tax.index_of(id);
    if (idx < 0) throw ValidationError("label id " + std::to_string(id) + " outside taxonomy");
    out.v[i] = static_cast<uint8_t>(idx);
  }
  return out;
}

LabelMap indices_to_labels(const LabelMap& indices, const ClassTaxonomy& tax) {
  LabelMap out(indices.h, indices.w);
  for (size_t i = 0; i < indices.v.size(); ++i) {
    const int idx = indices.v[i];
    if (idx == 255) {
      out.v[i] = static_cast<uint8_t>(tax.ignore_id);
      continue;
    }
    if (idx >= tax.num_classes())
      throw ValidationError("class index " + std::to_string(idx) + " outside taxonomy");
    out.v[i] = static_cast<uint8_t>(tax.class_ids[static_cast<size_t>(idx)]);
  }
  return out;
}

SegEvalResult evaluate_segmentation(SegModel& model, const std::vector<LabeledImage>& samples,
                                    const ClassTaxonomy& tax) {
  if (samples.empty()) throw ValidationError("evaluation split is empty");
  ConfusionAccumulator conf(tax);
  double ce_sum = 0.0;
  int64_t ce_batches = 0;
  for (const LabeledImage& s : samples) {
    Tensor logits = model.forward(normalize_image(s.image), false);
    const LabelMap idx = labels_to_indices(s.labels, tax);
    const LossBreakdown bd = maxent_loss(logits, {idx}, {}, 0.0);
    ce_sum += bd.ce_term;
    ++ce_batches;
    conf.add(indices_to_labels(predict_labels(softmax(logits)), tax), s.labels);
  }
  SegEvalResult r;
  r.ce = ce_sum / static_cast<double>(ce_batches);
  r.miou = conf.miou();
  return r;
}

TrainResult train_segmentation(SegModel& model, const std::vector<LabeledImage>& train_split,
                               const std::vector<LabeledImage>& val_split, const ClassTaxonomy& tax,
                               const TrainHyperparams& hp, const std::filesystem::path& out_dir,
                               const nlohmann::json& extra_meta, std::ostream* log) {
  if (train_split.empty()) throw ValidationError("training dataset is empty");
  if (hp.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (hp.batch < 1) throw ConfigError("batch must be >= 1");

  // Index-space labels converted once; this also validates them against the
  // taxonomy up front.
  std::vector<LabelMap> train_idx;
  train_idx.reserve(train_split.size());
  for (const LabeledImage& s : train_split) train_idx.push_back(labels_to_indices(s.labels, tax));

  std::filesystem::create_directories(out_dir);
  std::ofstream curve(out_dir / "loss_curve.csv");
  if (!curve) throw LoadError("cannot write " + (out_dir / "loss_curve.csv").string());
  curve << "epoch,split,loss,miou\n";
  curve.setf(std::ios::fixed);
  curve.precision(6);

  nn::Adam opt(model.params(), static_cast<float>(hp.lr));
  TrainResult result;

  std::vector<int> order(train_split.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < hp.epochs; ++epoch) {
    Rng rng(derive_seed(hp.seed, fnv1a64("seg_epoch"), static_cast<uint64_t>(epoch)));
    rng.shuffle(order);

    double loss_sum = 0.0;
    int batches = 0;
    ConfusionAccumulator train_conf(tax);
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(hp.batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(hp.batch));
      std::vector<const ImageU8*> imgs;
      std::vector<LabelMap> labels;
      for (size_t i = start; i < end; ++i) {
        imgs.push_back(&train_split[static_cast<size_t>(order[i])].image);
        labels.push_back(train_idx[static_cast<size_t>(order[i])]);
      }
      Tensor logits = model.forward(normalize_images(imgs), true);
      Tensor dlogits;
      const LossBreakdown bd = maxent_loss(logits, labels, {}, 0.0, &dlogits);
      if (!std::isfinite(bd.total))
        throw TrainingError("loss diverged at epoch " + std::to_string(epoch));
      loss_sum += bd.total;
      ++batches;
      opt.zero_grad();
      model.backward(dlogits);
      opt.step();
      for (size_t i = 0; i < labels.size(); ++i)
        train_conf.add(indices_to_labels(predict_labels(softmax(logits, static_cast<int>(i))), tax),
                       train_split[static_cast<size_t>(order[start + i])].labels);
    }

    const double train_loss = loss_sum / static_cast<double>(batches);
    result.train_loss.push_back(train_loss);
    curve << epoch << ",train," << train_loss << ',' << train_conf.miou() << '\n';

    if (!val_split.empty()) {
      const SegEvalResult val = evaluate_segmentation(model, val_split, tax);
      result.val_miou.push_back(val.miou);
      result.final_val_miou = val.miou;
      curve << epoch << ",val," << val.ce << ',' << val.miou << '\n';
      if (log)
        *log << "epoch " << epoch << "  train_loss " << train_loss << "  val_miou " << val.miou
             << '\n';
    } else if (log) {
      *log << "epoch " << epoch << "  train_loss " << train_loss << '\n';
    }
  }

  nlohmann::json meta = extra_meta.is_object() ? extra_meta : nlohmann::json::object();
  meta["kind"] = "segmentation";
  meta["model"] = seg_config_to_json(model.config());
  meta["training"] = {{"epochs", hp.epochs}, {"lr", hp.lr}, {"batch", hp.batch}, {"seed", hp.seed}};
  save_checkpoint(out_dir, model.params(), meta);
  return result;
}

nlohmann::json seg_config_to_json(const SegModelConfig& cfg) {
  return {{"num_classes", cfg.num_classes},
          {"input_channels", cfg.input_channels},
          {"depth", cfg.depth},
          {"base_width", cfg.base_width},
          {"seed", cfg.seed}};
}

SegModelConfig seg_config_from_json(const nlohmann::json& j) {
  SegModelConfig cfg;
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.input_channels = j.value("input_channels", 3);
  cfg.depth = j.at("depth").get<int>();
  cfg.base_width = j.at("base_width").get<int>();
  cfg.seed = j.value("seed", static_cast<uint64_t>(0));
  return cfg;
}

SegModel load_seg_model(const std::filesystem::path& ckpt_dir) {
  const nlohmann::json meta = load_checkpoint_meta(ckpt_dir);
  if (!meta.contains("model")) throw LoadError("checkpoint metadata lacks model config: " + ckpt_dir.string());
  SegModel model(seg_config_from_json(meta.at("model")));
  load_checkpoint_weights(ckpt_dir, model.params());
  return model;
}

}  // namespace memos
