#include "memos/synth_ood.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "memos/errors.hpp"
#include "memos/rng.hpp"

namespace memos {

namespace fs = std::filesystem;
using nlohmann::json;

BlurParams resolve_blur_params(int height, int width, double sigma, int kernel_size) {
  BlurParams p;
  p.sigma = sigma > 0 ? sigma : std::max(height, width) / 40.0;
  if (kernel_size > 0) {
    p.kernel_size = kernel_size;
  } else {
    int k = static_cast<int>(std::ceil(6.0 * p.sigma));
    if (k % 2 == 0) ++k;
    p.kernel_size = std::max(3, k);
  }
  if (p.kernel_size < 3 || p.kernel_size % 2 == 0)
    throw ConfigError("blur kernel_size must be odd and >= 3");
  return p;
}

namespace {

std::vector<float> gaussian_kernel(double sigma, int ksize) {
  std::vector<float> k(static_cast<size_t>(ksize));
  const int r = ksize / 2;
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    k[static_cast<size_t>(i + r)] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);
  return k;
}

inline int reflect101(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

ImageU8 gaussian_blur_rgb(const ImageU8& src, const BlurParams& p) {
  const auto k = gaussian_kernel(p.sigma, p.kernel_size);
  const int r = p.kernel_size / 2;
  const int h = src.h, w = src.w;

  std::vector<float> tmp(static_cast<size_t>(h) * w * 3);
  // Horizontal pass.
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc[3] = {0, 0, 0};
      for (int i = -r; i <= r; ++i) {
        const int xi = reflect101(x + i, w);
        const float kv = k[static_cast<size_t>(i + r)];
        for (int c = 0; c < 3; ++c) acc[c] += kv * src.at(y, xi, c);
      }
      for (int c = 0; c < 3; ++c)
        tmp[(static_cast<size_t>(y) * w + x) * 3 + c] = acc[c];
    }
  }
  // Vertical pass with rounding back to 8 bits.
  ImageU8 out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc[3] = {0, 0, 0};
      for (int i = -r; i <= r; ++i) {
        const int yi = reflect101(y + i, h);
        const float kv = k[static_cast<size_t>(i + r)];
        for (int c = 0; c < 3; ++c)
          acc[c] += kv * tmp[(static_cast<size_t>(yi) * w + x) * 3 + c];
      }
      for (int c = 0; c < 3; ++c) {
        const int v = static_cast<int>(std::lround(acc[c]));
        out.at(y, x, c) = static_cast<uint8_t>(std::clamp(v, 0, 255));
      }
    }
  }
  return out;
}

std::vector<int> select_class_subset(const ClassTaxonomy& taxonomy, int subset_size,
                                     uint64_t seed) {
  const int k = taxonomy.num_classes();
  if (subset_size < 1 || subset_size >= k)
    throw ConfigError("subset_size must be in [1, K-1], got " + std::to_string(subset_size));
  std::vector<int> ids = taxonomy.class_ids;
  Rng rng(derive_seed(seed, fnv1a64("class_subset")));
  rng.shuffle(ids);
  ids.resize(static_cast<size_t>(subset_size));
  std::sort(ids.begin(), ids.end());
  return ids;
}

SynthesizedSample blur_out_classes(const LabeledImage& sample, const std::vector<int>& c_sub,
                                   int ignore_id, const BlurParams& p) {
  SynthesizedSample out;
  out.id = sample.id;
  out.source_id = sample.id;
  out.labels = sample.labels;
  out.synth_mask = LabelMap(sample.labels.h, sample.labels.w, 0);

  const auto retained = [&](int id) {
    return id == ignore_id || std::find(c_sub.begin(), c_sub.end(), id) != c_sub.end();
  };

  bool any = false;
  for (size_t i = 0; i < sample.labels.v.size(); ++i) {
    if (!retained(sample.labels.v[i])) {
      out.synth_mask.v[i] = 1;
      any = true;
    }
  }
  if (!any) {
    out.image = sample.image;  // identity case: nothing to blur
    return out;
  }

  const ImageU8 blurred = gaussian_blur_rgb(sample.image, p);
  out.image = sample.image;
  for (size_t i = 0; i < out.synth_mask.v.size(); ++i) {
    if (out.synth_mask.v[i]) {
      for (int c = 0; c < 3; ++c) out.image.rgb[i * 3 + c] = blurred.rgb[i * 3 + c];
    }
  }
  return out;
}

SynthDataset build_synth_dataset(const std::vector<LabeledImage>& d_id,
                                 const ClassTaxonomy& taxonomy, const SynthConfig& cfg) {
  if (cfg.sample_count < 0 || cfg.sample_count > static_cast<int>(d_id.size()))
    throw ConfigError("sample_count must be <= |D_id| = " + std::to_string(d_id.size()));

  SynthDataset ds;
  ds.seed = cfg.seed;
  ds.c_sub = select_class_subset(taxonomy, cfg.subset_size, cfg.seed);
  const int h = d_id.empty() ? 64 : d_id.front().labels.h;
  const int w = d_id.empty() ? 64 : d_id.front().labels.w;
  ds.blur = resolve_blur_params(h, w, cfg.blur_sigma, cfg.kernel_size);

  std::vector<size_t> order(d_id.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, fnv1a64("sample_draw")));
  rng.shuffle(order);
  order.resize(static_cast<size_t>(cfg.sample_count));
  std::sort(order.begin(), order.end());

  for (size_t idx : order)
    ds.samples.push_back(blur_out_classes(d_id[idx], ds.c_sub, taxonomy.ignore_id, ds.blur));
  return ds;
}

void save_synth_dataset(const fs::path& root, const SynthDataset& ds,
                        const ClassTaxonomy& taxonomy) {
  DatasetManifest m;
  m.taxonomy = taxonomy;
  m.seed = ds.seed;
  m.provenance = "synthetic ood (class-subset gaussian blur)";
  std::vector<std::string> ids;
  for (const auto& s : ds.samples) {
    LabeledImage li{s.id, s.image, s.labels, std::nullopt};
    save_sample(root, "synth", li);
    write_png(root / "synth_ood" / (s.id + ".png"), s.synth_mask);
    ids.push_back(s.id);
  }
  m.splits["synth"] = ids;
  save_manifest(root, m);

  json j;
  j["c_sub"] = ds.c_sub;
  j["blur"] = {{"sigma", ds.blur.sigma}, {"kernel_size", ds.blur.kernel_size}};
  j["seed"] = ds.seed;
  j["source_ids"] = json::array();
  for (const auto& s : ds.samples) j["source_ids"].push_back(s.source_id);
  std::ofstream out(root / "synth_manifest.json");
  out << j.dump(2) << "\n";
}

SynthDataset load_synth_dataset(const fs::path& root) {
  const fs::path p = root / "synth_manifest.json";
  std::ifstream in(p);
  if (!in) throw LoadError("synth manifest not found: " + p.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw LoadError("synth manifest parse error: " + std::string(e.what()));
  }

  SynthDataset ds;
  ds.c_sub = j.at("c_sub").get<std::vector<int>>();
  ds.blur.sigma = j.at("blur").at("sigma").get<double>();
  ds.blur.kernel_size = j.at("blur").at("kernel_size").get<int>();
  ds.seed = j.value("seed", 0ULL);
  const auto source_ids = j.at("source_ids").get<std::vector<std::string>>();

  auto samples = load_dataset(root, "synth");
  if (samples.size() != source_ids.size())
    throw LoadError("synth manifest out of sync with sample files");
  for (size_t i = 0; i < samples.size(); ++i) {
    SynthesizedSample s;
    s.id = samples[i].id;
    s.source_id = source_ids[i];
    s.image = std::move(samples[i].image);
    s.labels = std::move(samples[i].labels);
    s.synth_mask = read_png_gray(root / "synth_ood" / (s.id + ".png"));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace memos
