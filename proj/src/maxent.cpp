#include "memos/maxent.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>

#include "memos/errors.hpp"
#include "memos/nn/adam.hpp"
#include "memos/nn/checkpoint.hpp"
#include "memos/plots.hpp"
#include "memos/rng.hpp"

namespace memos {

EntropyMap entropy_map(const ProbabilityMap& probs) {
  const double ln_k = std::log(static_cast<double>(probs.k));
  EntropyMap e;
  e.h = probs.h;
  e.w = probs.w;
  e.v.resize(static_cast<size_t>(probs.h) * probs.w);
  for (int y = 0; y < probs.h; ++y)
    for (int x = 0; x < probs.w; ++x) {
      const double* row = probs.row(y, x);
      double sum = 0.0, h = 0.0;
      for (int c = 0; c < probs.k; ++c) {
        const double p = row[c];
        if (p < -1e-12 || !std::isfinite(p))
          throw NumericError("probability row leaves the simplex (negative entry)");
        sum += p;
        if (p > 0.0) h -= p * std::log(p);
      }
      if (std::abs(sum - 1.0) > 1e-4)
        throw NumericError("probability row leaves the simplex (sum off by " +
                           std::to_string(sum - 1.0) + ")");
      e.at(y, x) = std::clamp(h, 0.0, ln_k);
    }
  return e;
}

LossBreakdown maxent_loss(const Tensor& logits, const std::vector<LabelMap>& labels,
                          const std::vector<LabelMap>& synth_masks, double lambda,
                          Tensor* dlogits) {
  if (!std::isfinite(lambda) || lambda < 0.0) throw ConfigError("lambda must be finite and >= 0");
  if (logits.ndim() != 4) throw ShapeError("maxent_loss expects {N,K,H,W} logits");
  const int n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (static_cast<int>(labels.size()) != n) throw ShapeError("one label map per batch item required");
  const bool has_masks = !synth_masks.empty();
  if (has_masks && static_cast<int>(synth_masks.size()) != n)
    throw ShapeError("one synth mask per batch item required");
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<size_t>(i)].h != h || labels[static_cast<size_t>(i)].w != w)
      throw ShapeError("label map size differs from logits");
    if (has_masks &&
        (synth_masks[static_cast<size_t>(i)].h != h || synth_masks[static_cast<size_t>(i)].w != w))
      throw ShapeError("synth mask size differs from logits");
  }

  // Cheap counting pass first, so gradients can be written already scaled.
  int64_t ce_count = 0, synth_count = 0;
  for (int i = 0; i < n; ++i)
    for (size_t p = 0; p < labels[static_cast<size_t>(i)].v.size(); ++p) {
      if (has_masks && synth_masks[static_cast<size_t>(i)].v[p] != 0)
        ++synth_count;
      else if (labels[static_cast<size_t>(i)].v[p] != 255)
        ++ce_count;
    }
  if (ce_count == 0 && synth_count == 0)
    throw TrainingError("degenerate batch: no supervised and no synth-OOD pixels");

  if (dlogits) {
    dlogits->resize(logits.shape());
    dlogits->zero();
  }

  double ce_sum = 0.0, ent_sum = 0.0;
  std::vector<double> z(static_cast<size_t>(k)), p(static_cast<size_t>(k));
  for (int i = 0; i < n; ++i) {
    const LabelMap& lab = labels[static_cast<size_t>(i)];
    const LabelMap* mask = has_masks ? &synth_masks[static_cast<size_t>(i)] : nullptr;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const bool synth = mask && mask->at(y, x) != 0;
        const int label = lab.at(y, x);
        if (!synth && label == 255) continue;
        if (!synth && label >= k)
          throw ValidationError("label index " + std::to_string(label) + " >= num_classes");

        double zmax = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          z[static_cast<size_t>(c)] = logits.at(i, c, y, x);
          zmax = std::max(zmax, z[static_cast<size_t>(c)]);
        }
        double sumexp = 0.0;
        for (int c = 0; c < k; ++c) {
          p[static_cast<size_t>(c)] = std::exp(z[static_cast<size_t>(c)] - zmax);
          sumexp += p[static_cast<size_t>(c)];
        }
        const double ln_sumexp = std::log(sumexp);
        for (int c = 0; c < k; ++c) p[static_cast<size_t>(c)] /= sumexp;

        if (synth) {
          // Entropy H = ln(sumexp) - sum_i p_i (z_i - zmax); dH/dz_j = -p_j (ln p_j + H).
          double dot = 0.0;
          for (int c = 0; c < k; ++c) dot += p[static_cast<size_t>(c)] * (z[static_cast<size_t>(c)] - zmax);
          const double ent = ln_sumexp - dot;
          ent_sum += ent;
          if (dlogits) {
            const double scale = lambda / static_cast<double>(synth_count);
            for (int c = 0; c < k; ++c) {
              const double pc = p[static_cast<size_t>(c)];
              if (pc <= 0.0) continue;
              const double ln_pc = (z[static_cast<size_t>(c)] - zmax) - ln_sumexp;
              dlogits->at(i, c, y, x) += static_cast<float>(scale * pc * (ln_pc + ent));
            }
          }
        } else {
          ce_sum += -((z[static_cast<size_t>(label)] - zmax) - ln_sumexp);
          if (dlogits) {
            const double scale = 1.0 / static_cast<double>(ce_count);
            for (int c = 0; c < k; ++c) {
              const double delta = c == label ? 1.0 : 0.0;
              dlogits->at(i, c, y, x) += static_cast<float>(scale * (p[static_cast<size_t>(c)] - delta));
            }
          }
        }
      }
  }

  LossBreakdown bd;
  bd.ce_pixel_count = ce_count;
  bd.synth_pixel_count = synth_count;
  bd.ce_term = ce_count ? ce_sum / static_cast<double>(ce_count) : 0.0;
  bd.maxent_term = synth_count ? ent_sum / static_cast<double>(synth_count) : 0.0;
  bd.total = bd.ce_term - lambda * bd.maxent_term;
  return bd;
}

double masked_cross_entropy(const Tensor& logits, const std::vector<LabelMap>& labels) {
  if (logits.ndim() != 4) throw ShapeError("masked_cross_entropy expects {N,K,H,W} logits");
  const int n = logits.dim(0), k = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
  if (static_cast<int>(labels.size()) != n) throw ShapeError("one label map per batch item required");

  double ce_sum = 0.0;
  int64_t count = 0;
  std::vector<double> z(static_cast<size_t>(k));
  for (int i = 0; i < n; ++i) {
    const LabelMap& lab = labels[static_cast<size_t>(i)];
    if (lab.h != h || lab.w != w) throw ShapeError("label map size differs from logits");
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int label = lab.at(y, x);
        if (label == 255) continue;
        if (label >= k)
          throw ValidationError("label index " + std::to_string(label) + " >= num_classes");
        double zmax = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          z[static_cast<size_t>(c)] = logits.at(i, c, y, x);
          zmax = std::max(zmax, z[static_cast<size_t>(c)]);
        }
        double sumexp = 0.0;
        for (int c = 0; c < k; ++c) sumexp += std::exp(z[static_cast<size_t>(c)] - zmax);
        ce_sum += -((z[static_cast<size_t>(label)] - zmax) - std::log(sumexp));
        ++count;
      }
  }
  return count ? ce_sum / static_cast<double>(count) : 0.0;
}

namespace {

constexpr int kHistBins = 50;

struct EntropyPool {
  double sum = 0.0;
  int64_t count = 0;
  std::vector<int64_t> hist = std::vector<int64_t>(kHistBins, 0);
  double ln_k = 1.0;

  void add(double value) {
    sum += value;
    ++count;
    int bin = static_cast<int>(value / ln_k * kHistBins);
    hist[static_cast<size_t>(std::clamp(bin, 0, kHistBins - 1))] += 1;
  }

  EntropyStats stats() const {
    EntropyStats s;
    s.mean = count ? sum / static_cast<double>(count) : 0.0;
    s.hist = hist;
    s.count = count;
    return s;
  }
};

}  // namespace

EntropyStats pool_id_entropy(SegModel& model, const std::vector<LabeledImage>& samples,
                             const ClassTaxonomy& tax) {
  std::array<bool, 256> is_class{};
  for (int id : tax.class_ids) is_class[static_cast<size_t>(id)] = true;
  EntropyPool pool;
  pool.ln_k = std::log(static_cast<double>(model.config().num_classes));
  for (const LabeledImage& s : samples) {
    const EntropyMap e = entropy_map(softmax(model.forward(normalize_image(s.image), false)));
    for (int y = 0; y < e.h; ++y)
      for (int x = 0; x < e.w; ++x)
        if (is_class[s.labels.at(y, x)]) pool.add(e.at(y, x));
  }
  return pool.stats();
}

EntropyStats pool_synth_entropy(SegModel& model, const std::vector<SynthesizedSample>& samples) {
  EntropyPool pool;
  pool.ln_k = std::log(static_cast<double>(model.config().num_classes));
  for (const SynthesizedSample& s : samples) {
    const EntropyMap e = entropy_map(softmax(model.forward(normalize_image(s.image), false)));
    for (int y = 0; y < e.h; ++y)
      for (int x = 0; x < e.w; ++x)
        if (s.synth_mask.at(y, x) != 0) pool.add(e.at(y, x));
  }
  return pool.stats();
}

namespace {

nlohmann::json hist_json(const EntropyStats& s) { return s.hist; }

}  // namespace

FinetuneReport finetune(SegModel& model, const std::vector<LabeledImage>& d_id,
                        const std::vector<SynthesizedSample>& d_synth, const ClassTaxonomy& tax,
                        const MaxEntConfig& cfg, const std::vector<LabeledImage>& eval_id,
                        const std::vector<SynthesizedSample>& eval_synth,
                        const std::filesystem::path& out_dir, const nlohmann::json& extra_meta,
                        std::ostream* log) {
  if (!std::isfinite(cfg.lambda) || cfg.lambda < 0.0)
    throw ConfigError("lambda must be finite and >= 0");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.batch < 1) throw ConfigError("batch must be >= 1");
  if (d_id.empty()) throw ValidationError("fine-tuning dataset is empty");
  if (d_synth.empty() && log)
    *log << "warning: no synthetic samples given; reducing to CE-only fine-tuning\n";

  // Pre-resolved batch ingredients: image, CE labels (index space, with
  // blurred pixels unsupervised) and the synth mask (all-zero for ID items).
  struct Item {
    const ImageU8* image;
    LabelMap ce;
    LabelMap mask;
  };
  std::vector<Item> items;
  items.reserve(d_id.size() + d_synth.size());
  const int ih = d_id[0].image.h, iw = d_id[0].image.w;
  for (const LabeledImage& s : d_id)
    items.push_back({&s.image, labels_to_indices(s.labels, tax), LabelMap(ih, iw, 0)});
  for (const SynthesizedSample& s : d_synth) {
    LabelMap ce = labels_to_indices(s.labels, tax);
    for (size_t p = 0; p < ce.v.size(); ++p)
      if (s.synth_mask.v[p] != 0) ce.v[p] = 255;
    items.push_back({&s.image, std::move(ce), s.synth_mask});
  }

  FinetuneReport report;
  report.lambda = cfg.lambda;
  report.epochs = cfg.epochs;
  report.miou_before = evaluate_segmentation(model, eval_id, tax).miou;
  report.id_before = pool_id_entropy(model, eval_id, tax);
  report.ood_before = pool_synth_entropy(model, eval_synth);

  std::filesystem::create_directories(out_dir);
  std::ofstream curve(out_dir / "finetune_curve.csv");
  if (!curve) throw LoadError("cannot write " + (out_dir / "finetune_curve.csv").string());
  curve << "epoch,ce_term,maxent_term,total\n";
  curve.setf(std::ios::fixed);
  curve.precision(6);

  nn::Adam opt(model.params(), static_cast<float>(cfg.lr));
  std::vector<int> order(items.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, fnv1a64("maxent_epoch"), static_cast<uint64_t>(epoch)));
    rng.shuffle(order);
    double ce_sum = 0.0, me_sum = 0.0, total_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch)) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch));
      std::vector<const ImageU8*> imgs;
      std::vector<LabelMap> labels, masks;
      for (size_t i = start; i < end; ++i) {
        const Item& it = items[static_cast<size_t>(order[i])];
        imgs.push_back(it.image);
        labels.push_back(it.ce);
        masks.push_back(it.mask);
      }
      Tensor logits = model.forward(normalize_images(imgs), true);
      Tensor dlogits;
      const LossBreakdown bd = maxent_loss(logits, labels, masks, cfg.lambda, &dlogits);
      if (!std::isfinite(bd.total))
        throw TrainingError("fine-tuning loss diverged at epoch " + std::to_string(epoch));
      ce_sum += bd.ce_term;
      me_sum += bd.maxent_term;
      total_sum += bd.total;
      ++batches;
      opt.zero_grad();
      model.backward(dlogits);
      opt.step();
    }
    LossBreakdown epoch_bd;
    epoch_bd.ce_term = ce_sum / batches;
    epoch_bd.maxent_term = me_sum / batches;
    epoch_bd.total = total_sum / batches;
    report.curve.push_back(epoch_bd);
    curve << epoch << ',' << epoch_bd.ce_term << ',' << epoch_bd.maxent_term << ','
          << epoch_bd.total << '\n';
    if (log)
      *log << "epoch " << epoch << "  ce " << epoch_bd.ce_term << "  maxent " << epoch_bd.maxent_term
           << "  total " << epoch_bd.total << '\n';
  }

  report.miou_after = evaluate_segmentation(model, eval_id, tax).miou;
  report.id_after = pool_id_entropy(model, eval_id, tax);
  report.ood_after = pool_synth_entropy(model, eval_synth);

  nlohmann::json meta = extra_meta.is_object() ? extra_meta : nlohmann::json::object();
  meta["kind"] = "segmentation";
  meta["model"] = seg_config_to_json(model.config());
  meta["finetune"] = {{"lambda", cfg.lambda},
                      {"epochs", cfg.epochs},
                      {"lr", cfg.lr},
                      {"batch", cfg.batch},
                      {"seed", cfg.seed}};
  save_checkpoint(out_dir, model.params(), meta);

  const double ln_k = std::log(static_cast<double>(model.config().num_classes));
  nlohmann::json rj{{"lambda", cfg.lambda},
                    {"epochs", cfg.epochs},
                    {"id_entropy_hist", hist_json(report.id_after)},
                    {"ood_entropy_hist", hist_json(report.ood_after)},
                    {"miou_before", report.miou_before},
                    {"miou_after", report.miou_after},
                    {"id_entropy_hist_base", hist_json(report.id_before)},
                    {"ood_entropy_hist_base", hist_json(report.ood_before)},
                    {"hist_range", {0.0, ln_k}},
                    {"id_mean_entropy", {{"before", report.id_before.mean}, {"after", report.id_after.mean}}},
                    {"ood_mean_entropy", {{"before", report.ood_before.mean}, {"after", report.ood_after.mean}}}};
  std::ofstream rout(out_dir / "finetune_report.json");
  if (!rout) throw LoadError("cannot write " + (out_dir / "finetune_report.json").string());
  rout << rj.dump(2) << '\n';

  plot_histogram(out_dir / "entropy_hist_id.png", "ID pixel entropy (nats)", 0.0, ln_k,
                 {{"base", report.id_before.hist}, {"calibrated", report.id_after.hist}});
  plot_histogram(out_dir / "entropy_hist_ood.png", "synth-OOD pixel entropy (nats)", 0.0, ln_k,
                 {{"base", report.ood_before.hist}, {"calibrated", report.ood_after.hist}});
  return report;
}

}  // namespace memos
