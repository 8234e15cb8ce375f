#include <algorithm>
#include <set>

#include "doctest.h"
#include "memos/errors.hpp"
#include "memos/synth_ood.hpp"
#include "memos/toy_scenes.hpp"
#include "test_util.hpp"

using namespace memos;
using memos::test::TempDir;

TEST_SUITE_BEGIN("synth");

namespace {

std::vector<LabeledImage> toy_split(const std::filesystem::path& dir, int n, uint64_t seed) {
  generate_toy_scenes(dir, n, 48, 48, 8, seed, false);
  return load_dataset(dir, "train");
}

}  // namespace

TEST_CASE("select_class_subset: size, determinism, bounds") {
  const ClassTaxonomy tax = ClassTaxonomy::contiguous(8);
  auto a = select_class_subset(tax, 4, 123);
  auto b = select_class_subset(tax, 4, 123);
  auto c = select_class_subset(tax, 4, 124);
  CHECK(a.size() == 4);
  CHECK(a == b);
  CHECK(a != c);  // different seed: astronomically unlikely to collide
  CHECK(std::is_sorted(a.begin(), a.end()));
  for (int id : a) CHECK(tax.contains(id));

  CHECK(select_class_subset(tax, 7, 1).size() == 7);  // K-1 leaves one blurred class
  CHECK_THROWS_AS(select_class_subset(tax, 8, 1), ConfigError);
  CHECK_THROWS_AS(select_class_subset(tax, 9, 1), ConfigError);
}

TEST_CASE("masked identity and recount oracle") {
  TempDir dir("synth_mask");
  auto split = toy_split(dir, 6, 21);
  const ClassTaxonomy tax = ClassTaxonomy::contiguous(8);
  const std::vector<int> c_sub = {0, 2, 5};
  const BlurParams p = resolve_blur_params(48, 48, 4.0, 0);

  for (const auto& s : split) {
    SynthesizedSample out = blur_out_classes(s, c_sub, tax.ignore_id, p);
    REQUIRE(out.image.h == s.image.h);
    REQUIRE(out.image.w == s.image.w);
    int64_t mask_count = 0, expect_count = 0;
    for (int y = 0; y < s.image.h; ++y)
      for (int x = 0; x < s.image.w; ++x) {
        const int label = s.labels.at(y, x);
        const bool should_blur =
            label != tax.ignore_id &&
            std::find(c_sub.begin(), c_sub.end(), label) == c_sub.end();
        REQUIRE(out.synth_mask.at(y, x) == (should_blur ? 1 : 0));
        mask_count += out.synth_mask.at(y, x);
        expect_count += should_blur;
        if (!should_blur)
          for (int ch = 0; ch < 3; ++ch)
            REQUIRE(out.image.at(y, x, ch) == s.image.at(y, x, ch));  // bit-identical
      }
    REQUIRE(mask_count == expect_count);
    REQUIRE(out.labels.v == s.labels.v);  // original labels kept
  }
}

TEST_CASE("c_sub covering all classes leaves the image untouched") {
  TempDir dir("synth_all");
  auto split = toy_split(dir, 2, 22);
  const ClassTaxonomy tax = ClassTaxonomy::contiguous(8);
  const std::vector<int> all = {0, 1, 2, 3, 4, 5, 6, 7};
  SynthesizedSample out = blur_out_classes(split[0], all, tax.ignore_id, {4.0, 25});
  CHECK(out.image.rgb == split[0].image.rgb);
  for (uint8_t m : out.synth_mask.v) REQUIRE(m == 0);
}

TEST_CASE("empty c_sub blurs every non-ignore pixel") {
  TempDir dir("synth_none");
  auto split = toy_split(dir, 2, 23);
  const ClassTaxonomy tax = ClassTaxonomy::contiguous(8);
  SynthesizedSample out = blur_out_classes(split[0], {}, tax.ignore_id, {4.0, 25});
  for (int y = 0; y < out.synth_mask.h; ++y)
    for (int x = 0; x < out.synth_mask.w; ++x)
      REQUIRE(out.synth_mask.at(y, x) == (split[0].labels.at(y, x) == tax.ignore_id ? 0 : 1));
}

TEST_CASE("blurring a constant image is the identity up to rounding") {
  LabeledImage s;
  s.id = "c";
  s.image = ImageU8(40, 40);
  for (auto& b : s.image.rgb) b = 137;
  s.labels = LabelMap(40, 40, 1);
  SynthesizedSample out = blur_out_classes(s, {0}, 255, {5.0, 31});
  for (uint8_t b : out.image.rgb) REQUIRE(std::abs(int(b) - 137) <= 1);
}

TEST_CASE("mean absolute difference grows monotonically with sigma") {
  TempDir dir("synth_mono");
  auto split = toy_split(dir, 1, 24);
  const ClassTaxonomy tax = ClassTaxonomy::contiguous(8);
  double prev = 0.0;
  for (double sigma : {0.8, 1.6, 3.2, 6.4}) {
    SynthesizedSample out =
        blur_out_classes(split[0], {0}, tax.ignore_id, resolve_blur_params(48, 48, sigma, 0));
    double mad = 0.0;
    int64_t n = 0;
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 48; ++x) {
        if (!out.synth_mask.at(y, x)) continue;
        for (int ch = 0; ch < 3; ++ch)
          mad += std::abs(int(out.image.at(y, x, ch)) - int(split[0].image.at(y, x, ch)));
        n += 3;
      }
    REQUIRE(n > 0);
    mad /= static_cast<double>(n);
    INFO("sigma " << sigma << " mad " << mad);
    REQUIRE(mad > prev);
    prev = mad;
  }
  CHECK(prev > 0.0);
}

TEST_CASE("resolve_blur_params defaults scale with resolution") {
  BlurParams p = resolve_blur_params(400, 200, 0.0, 0);
  CHECK(p.sigma == doctest::Approx(10.0));
  CHECK(p.kernel_size >= 6 * 10);
  CHECK(p.kernel_size % 2 == 1);
  BlurParams q = resolve_blur_params(48, 48, 2.5, 0);
  CHECK(q.sigma == doctest::Approx(2.5));
  CHECK_THROWS_AS(resolve_blur_params(48, 48, 2.5, 4), ConfigError);  // even kernel
}

TEST_CASE("build_synth_dataset: counts, determinism, provenance round trip") {
  TempDir dir("synth_ds");
  auto split = toy_split(dir, 10, 25);
  const ClassTaxonomy tax = ClassTaxonomy::contiguous(8);
  SynthConfig cfg;
  cfg.subset_size = 4;
  cfg.sample_count = 5;
  cfg.blur_sigma = 3.0;
  cfg.seed = 77;

  SynthDataset ds = build_synth_dataset(split, tax, cfg);
  REQUIRE(ds.samples.size() == 5);
  CHECK(ds.c_sub.size() == 4);
  std::set<std::string> sources;
  for (const auto& s : ds.samples) sources.insert(s.source_id);
  CHECK(sources.size() == 5);  // without replacement

  SynthDataset ds2 = build_synth_dataset(split, tax, cfg);
  REQUIRE(ds2.samples.size() == ds.samples.size());
  for (size_t i = 0; i < ds.samples.size(); ++i)
    REQUIRE(ds.samples[i].image.rgb == ds2.samples[i].image.rgb);

  SynthConfig zero = cfg;
  zero.sample_count = 0;
  CHECK(build_synth_dataset(split, tax, zero).samples.empty());

  SynthConfig toomany = cfg;
  toomany.sample_count = 11;
  CHECK_THROWS_AS(build_synth_dataset(split, tax, toomany), ConfigError);

  TempDir save("synth_save");
  save_synth_dataset(save, ds, tax);
  SynthDataset back = load_synth_dataset(save);
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.c_sub == ds.c_sub);
  for (size_t i = 0; i < ds.samples.size(); ++i) {
    REQUIRE(back.samples[i].image.rgb == ds.samples[i].image.rgb);
    REQUIRE(back.samples[i].synth_mask.v == ds.samples[i].synth_mask.v);
    REQUIRE(back.samples[i].source_id == ds.samples[i].source_id);
  }
}

TEST_SUITE_END();
