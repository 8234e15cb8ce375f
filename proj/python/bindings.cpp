// Python surface of the core library: numpy-facing wrappers over the main
// operations (scene generation, blur synthesis, softmax/entropy, metacog
// features, detection metrics). Heavy lifting stays in C++; python sees
// plain float64 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "memos/dataset.hpp"
#include "memos/errors.hpp"
#include "memos/maxent.hpp"
#include "memos/metacog.hpp"
#include "memos/metrics.hpp"
#include "memos/synth_ood.hpp"
#include "memos/toy_scenes.hpp"

namespace py = pybind11;
using namespace memos;

namespace {

ImageU8 image_from_array(const py::array_t<uint8_t>& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ShapeError("image must be (h, w, 3) uint8");
  ImageU8 img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  auto r = a.unchecked<3>();
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = r(y, x, c);
  return img;
}

py::array_t<uint8_t> image_to_array(const ImageU8& img) {
  py::array_t<uint8_t> a({img.h, img.w, 3});
  auto r = a.mutable_unchecked<3>();
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < 3; ++c) r(y, x, c) = img.at(y, x, c);
  return a;
}

LabelMap labels_from_array(const py::array_t<uint8_t>& a) {
  if (a.ndim() != 2) throw ShapeError("label map must be (h, w) uint8");
  LabelMap m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  auto r = a.unchecked<2>();
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) m.at(y, x) = r(y, x);
  return m;
}

py::array_t<uint8_t> labels_to_array(const LabelMap& m) {
  py::array_t<uint8_t> a({m.h, m.w});
  auto r = a.mutable_unchecked<2>();
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) r(y, x) = m.at(y, x);
  return a;
}

ProbabilityMap probs_from_array(const py::array_t<double>& a) {
  if (a.ndim() != 3) throw ShapeError("probabilities must be (h, w, k) float64");
  ProbabilityMap p;
  p.h = static_cast<int>(a.shape(0));
  p.w = static_cast<int>(a.shape(1));
  p.k = static_cast<int>(a.shape(2));
  p.v.resize(static_cast<size_t>(p.h) * p.w * p.k);
  auto r = a.unchecked<3>();
  for (int y = 0; y < p.h; ++y)
    for (int x = 0; x < p.w; ++x)
      for (int c = 0; c < p.k; ++c) p.at(y, x, c) = r(y, x, c);
  return p;
}

py::array_t<double> grid_to_array(const std::vector<double>& v, int h, int w) {
  py::array_t<double> a({h, w});
  auto r = a.mutable_unchecked<2>();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) r(y, x) = v[static_cast<size_t>(y) * w + x];
  return a;
}

}  // namespace

PYBIND11_MODULE(_memos, m) {
  m.doc() = "core operations of the synthetic-OOD segmentation lab";

  // Library errors keep their kind; python sees them all as RuntimeError
  // subclasses with the original message.
  static py::exception<Error> exc(m, "MemosError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      exc(e.what());
    }
  });

  m.def(
      "generate_toy_scenes",
      [](const std::filesystem::path& root, int num_images, int height, int width,
         int num_classes, uint64_t seed, bool ood_mode, const std::string& split) {
        const DatasetManifest man =
            generate_toy_scenes(root, num_images, height, width, num_classes, seed, ood_mode,
                                split);
        return man.splits.at(split);
      },
      py::arg("root"), py::arg("num_images"), py::arg("height"), py::arg("width"),
      py::arg("num_classes"), py::arg("seed"), py::arg("ood_mode") = false,
      py::arg("split") = "train",
      "Generate a procedural dataset split on disk; returns the sample ids.");

  m.def(
      "validate_dataset",
      [](const std::filesystem::path& root) { return validate_dataset(root).violations; },
      py::arg("root"), "Check an on-disk dataset; returns a list of violation strings.");

  m.def(
      "load_sample",
      [](const std::filesystem::path& root, const std::string& split, const std::string& id) {
        for (const auto& s : load_dataset(root, split))
          if (s.id == id)
            return py::make_tuple(image_to_array(s.image), labels_to_array(s.labels));
        throw LoadError("no sample " + id + " in split " + split);
      },
      py::arg("root"), py::arg("split"), py::arg("id"),
      "Load one sample as (image uint8 (h,w,3), labels uint8 (h,w)).");

  m.def(
      "gaussian_blur",
      [](const py::array_t<uint8_t>& image, double sigma, int kernel_size) {
        const ImageU8 img = image_from_array(image);
        return image_to_array(
            gaussian_blur_rgb(img, resolve_blur_params(img.h, img.w, sigma, kernel_size)));
      },
      py::arg("image"), py::arg("sigma") = 0.0, py::arg("kernel_size") = 0,
      "Separable Gaussian blur; sigma/kernel <= 0 pick resolution-scaled defaults.");

  m.def(
      "blur_out_classes",
      [](const py::array_t<uint8_t>& image, const py::array_t<uint8_t>& labels,
         const std::vector<int>& c_sub, int num_classes, double sigma, int kernel_size) {
        LabeledImage s;
        s.id = "py";
        s.image = image_from_array(image);
        s.labels = labels_from_array(labels);
        const ClassTaxonomy tax = ClassTaxonomy::contiguous(num_classes);
        const SynthesizedSample out = blur_out_classes(
            s, c_sub, tax.ignore_id, resolve_blur_params(s.image.h, s.image.w, sigma, kernel_size));
        return py::make_tuple(image_to_array(out.image), labels_to_array(out.synth_mask));
      },
      py::arg("image"), py::arg("labels"), py::arg("c_sub"), py::arg("num_classes"),
      py::arg("sigma") = 0.0, py::arg("kernel_size") = 0,
      "Blur pixels whose class is outside c_sub; returns (image, synth_mask).");

  m.def(
      "softmax",
      [](const py::array_t<double>& logits) {
        if (logits.ndim() != 3) throw ShapeError("logits must be (h, w, k) float64");
        const int h = static_cast<int>(logits.shape(0));
        const int w = static_cast<int>(logits.shape(1));
        const int k = static_cast<int>(logits.shape(2));
        Tensor t({1, k, h, w});
        auto r = logits.unchecked<3>();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int c = 0; c < k; ++c) t.at(0, c, y, x) = static_cast<float>(r(y, x, c));
        const ProbabilityMap p = softmax(t);
        py::array_t<double> a({h, w, k});
        auto out = a.mutable_unchecked<3>();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int c = 0; c < k; ++c) out(y, x, c) = p.at(y, x, c);
        return a;
      },
      py::arg("logits"), "Stabilized per-pixel softmax of an (h, w, k) logit array.");

  m.def(
      "entropy",
      [](const py::array_t<double>& probs) {
        const ProbabilityMap p = probs_from_array(probs);
        const EntropyMap e = entropy_map(p);
        return grid_to_array(e.v, e.h, e.w);
      },
      py::arg("probs"), "Per-pixel Shannon entropy (nats) of an (h, w, k) probability array.");

  m.def(
      "predict_labels",
      [](const py::array_t<double>& probs) {
        return labels_to_array(predict_labels(probs_from_array(probs)));
      },
      py::arg("probs"), "Per-pixel argmax with ties broken toward the lowest index.");

  m.def(
      "metacog_input",
      [](const py::array_t<double>& probs, const std::string& encoding, bool normalize_entropy) {
        MetacogFeatureConfig fc;
        if (encoding == "one_hot")
          fc.encoding = ClassEncoding::kOneHot;
        else if (encoding == "scaled_index")
          fc.encoding = ClassEncoding::kScaledIndex;
        else
          throw ConfigError("encoding must be scaled_index or one_hot");
        fc.normalize_entropy = normalize_entropy;
        const MetacogInput in = build_metacog_input(probs_from_array(probs), fc);
        py::array_t<double> a({in.channels, in.h, in.w});
        auto r = a.mutable_unchecked<3>();
        for (int c = 0; c < in.channels; ++c)
          for (int y = 0; y < in.h; ++y)
            for (int x = 0; x < in.w; ++x) r(c, y, x) = in.at(c, y, x);
        return a;
      },
      py::arg("probs"), py::arg("encoding") = "scaled_index",
      py::arg("normalize_entropy") = true,
      "Stack the correctness net's input channels from an (h, w, k) probability array.");

  m.def(
      "auprc",
      [](const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
        return auprc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"),
      "Average precision over descending score thresholds, ties grouped.");

  m.def(
      "fpr_at_95_tpr",
      [](const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
        return fpr_at_95_tpr(scores, labels);
      },
      py::arg("scores"), py::arg("labels"),
      "False-positive rate at the loosest threshold reaching TPR >= 0.95.");

  m.def(
      "miou",
      [](const py::array_t<uint8_t>& pred, const py::array_t<uint8_t>& gt, int num_classes) {
        return miou(labels_from_array(pred), labels_from_array(gt),
                    ClassTaxonomy::contiguous(num_classes));
      },
      py::arg("pred"), py::arg("gt"), py::arg("num_classes"),
      "Mean IoU over classes present in ground truth or prediction.");
}
