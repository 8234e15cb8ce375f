#include "memos/toy_scenes.hpp"

#include <array>
#include <cstdio>

#include "memos/errors.hpp"
#include "memos/rng.hpp"

namespace memos {

namespace fs = std::filesystem;

namespace {

struct Rgb {
  int r, g, b;
};

// ID base colors. Saturated, mutually distant hues.
constexpr std::array<Rgb, kToyPaletteCapacity> kIdPalette = {{
    {64, 96, 48},    // moss (background)
    {200, 60, 60},   // red
    {60, 110, 200},  // blue
    {220, 180, 60},  // yellow
    {150, 70, 190},  // purple
    {60, 180, 170},  // teal
    {230, 130, 50},  // orange
    {120, 200, 80},  // lime
    {200, 90, 150},  // pink
    {90, 90, 220},   // indigo
    {170, 150, 90},  // tan
    {70, 160, 110},  // green
    {210, 210, 200}, // chalk
    {130, 60, 60},   // brick
    {60, 130, 130},  // slate
    {190, 110, 110}, // rose
}};

inline int clamp255(int v) { return v < 0 ? 0 : (v > 255 ? 255 : v); }

inline uint32_t hash2d(uint64_t key, int x, int y) {
  return static_cast<uint32_t>(splitmix64(key ^ (static_cast<uint64_t>(static_cast<uint32_t>(x)) << 32) ^ static_cast<uint32_t>(y)));
}

inline int isqrt(int v) {
  int r = 0;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r;
}

// ID texture families. Fixed-point integer only.
enum class IdTex { kValueNoise, kHStripe, kVStripe, kChecker, kDots };

Rgb shade(Rgb c, int num, int den) {
  return {clamp255(c.r * num / den), clamp255(c.g * num / den), clamp255(c.b * num / den)};
}

Rgb jitter(Rgb c, uint64_t key, int x, int y, int amp) {
  const int n = static_cast<int>(hash2d(key, x, y) % static_cast<uint32_t>(2 * amp + 1)) - amp;
  return {clamp255(c.r + n), clamp255(c.g + n), clamp255(c.b + n)};
}

// Smooth blotches: bilinear interpolation of lattice hashes in Q8. `shift`
// sets the lattice pitch (3 -> 8 px, 4 -> 16 px).
int value_noise(uint64_t key, int x, int y, int shift = 3) {
  const int cx = x >> shift, cy = y >> shift;
  const int mask = (1 << shift) - 1;
  const int fx = (x & mask) << (8 - shift), fy = (y & mask) << (8 - shift);  // 0..255 in Q8
  const int v00 = static_cast<int>(hash2d(key, cx, cy) & 255);
  const int v10 = static_cast<int>(hash2d(key, cx + 1, cy) & 255);
  const int v01 = static_cast<int>(hash2d(key, cx, cy + 1) & 255);
  const int v11 = static_cast<int>(hash2d(key, cx + 1, cy + 1) & 255);
  const int top = v00 * (256 - fx) + v10 * fx;
  const int bot = v01 * (256 - fx) + v11 * fx;
  return (top * (256 - fy) + bot * fy) >> 16;  // 0..255
}

Rgb id_texel(IdTex tex, Rgb base, uint64_t key, int x, int y) {
  switch (tex) {
    case IdTex::kValueNoise: {
      const int n = value_noise(key, x, y) - 128;  // -128..127
      Rgb c{clamp255(base.r + n / 3), clamp255(base.g + n / 3), clamp255(base.b + n / 3)};
      return jitter(c, key ^ 0x5eedULL, x, y, 10);
    }
    case IdTex::kHStripe: {
      Rgb c = ((y >> 2) & 1) ? shade(base, 5, 4) : shade(base, 3, 4);
      return jitter(c, key, x, y, 12);
    }
    case IdTex::kVStripe: {
      Rgb c = ((x >> 2) & 1) ? shade(base, 5, 4) : shade(base, 3, 4);
      return jitter(c, key, x, y, 12);
    }
    case IdTex::kChecker: {
      Rgb c = (((x >> 3) ^ (y >> 3)) & 1) ? shade(base, 5, 4) : shade(base, 3, 4);
      return jitter(c, key, x, y, 12);
    }
    case IdTex::kDots: {
      const int cx = x >> 3, cy = y >> 3;
      const uint32_t h = hash2d(key, cx, cy);
      const int ox = 2 + static_cast<int>(h & 3);
      const int oy = 2 + static_cast<int>((h >> 2) & 3);
      const int dx = (x & 7) - ox, dy = (y & 7) - oy;
      Rgb c = (dx * dx + dy * dy <= 4) ? shade(base, 3, 2) : shade(base, 4, 5);
      return jitter(c, key, x, y, 12);
    }
  }
  return base;
}

// Smooth-surface anomaly texel: coarse value noise over a color that sits
// between two ID palette entries, shaded darker toward the instance rim so it
// reads as a lit object. Crucially there is no high-frequency detail and no
// per-pixel jitter — every ID family carries both, and their absence is also
// the signature a strong blur leaves behind, which is what lets a net
// calibrated on blurred content flag these instances.
Rgb ood_texel(Rgb base, uint64_t key, int x, int y, int cx, int cy, int r) {
  const int n = value_noise(key, x, y, 4) - 128;  // coarse, +-16 after scaling
  Rgb c{clamp255(base.r + n / 8), clamp255(base.g + n / 8), clamp255(base.b + n / 8)};
  const int d = isqrt((x - cx) * (x - cx) + (y - cy) * (y - cy));
  const int dq = std::min(255, d * 256 / std::max(1, r));
  return shade(c, 288 - dq / 2, 256);  // 1.125x at center -> 0.625x at rim
}

enum class ShapeKind { kCircle, kRect, kTriangle };

struct Shape {
  ShapeKind kind;
  int cx, cy, r;          // circle
  int x0, y0, x1, y1;     // rect
  int ax, ay, bx, by, px, py;  // triangle
};

Shape random_shape(Rng& rng, int h, int w, int min_r, int max_r) {
  Shape s{};
  const int kind = rng.uniform_in(0, 2);
  const int r = rng.uniform_in(min_r, max_r);
  const int cx = rng.uniform_in(r, w - 1 - r);
  const int cy = rng.uniform_in(r, h - 1 - r);
  if (kind == 0) {
    s.kind = ShapeKind::kCircle;
    s.cx = cx; s.cy = cy; s.r = r;
  } else if (kind == 1) {
    s.kind = ShapeKind::kRect;
    const int rx = rng.uniform_in(min_r, max_r);
    const int ry = rng.uniform_in(min_r, max_r);
    s.x0 = std::max(0, cx - rx); s.x1 = std::min(w - 1, cx + rx);
    s.y0 = std::max(0, cy - ry); s.y1 = std::min(h - 1, cy + ry);
    s.cx = cx; s.cy = cy; s.r = std::max(rx, ry);
  } else {
    s.kind = ShapeKind::kTriangle;
    // Three vertices spread around the center so the triangle is never thin.
    s.ax = cx; s.ay = cy - r;
    s.bx = cx - r; s.by = cy + rng.uniform_in(r / 2, r);
    s.px = cx + r; s.py = cy + rng.uniform_in(r / 2, r);
    s.cx = cx; s.cy = cy; s.r = r;
  }
  return s;
}

bool inside(const Shape& s, int x, int y) {
  switch (s.kind) {
    case ShapeKind::kCircle:
      return (x - s.cx) * (x - s.cx) + (y - s.cy) * (y - s.cy) <= s.r * s.r;
    case ShapeKind::kRect:
      return x >= s.x0 && x <= s.x1 && y >= s.y0 && y <= s.y1;
    case ShapeKind::kTriangle: {
      const auto cross = [](int ox, int oy, int ax, int ay, int bx, int by) {
        return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox);
      };
      const int d1 = cross(s.ax, s.ay, s.bx, s.by, x, y);
      const int d2 = cross(s.bx, s.by, s.px, s.py, x, y);
      const int d3 = cross(s.px, s.py, s.ax, s.ay, x, y);
      const bool neg = (d1 < 0) || (d2 < 0) || (d3 < 0);
      const bool pos = (d1 > 0) || (d2 > 0) || (d3 > 0);
      return !(neg && pos);
    }
  }
  return false;
}

struct Paint {
  Shape shape;
  int class_id;      // taxonomy id, or -1 for an OOD instance
  uint64_t tex_key;
  Rgb ood_base{};         // anomaly surface color (between two ID colors)
  int mix_cls = -1;       // palette entry this instance drifts toward
  int mix_t = 0;          // Q8 blend weight, 0..255
  int bright_num = 10;    // per-instance brightness = bright_num / 10
};

Rgb mix_q8(Rgb a, Rgb b, int t) {
  return {(a.r * (256 - t) + b.r * t) >> 8, (a.g * (256 - t) + b.g * t) >> 8,
          (a.b * (256 - t) + b.b * t) >> 8};
}

LabeledImage render_scene(const ToySceneConfig& cfg, const std::string& split,
                          int img_idx, bool ood_mode, uint64_t split_tag) {
  const int h = cfg.height, w = cfg.width;
  const int k = cfg.num_classes;
  Rng rng(derive_seed(cfg.seed, split_tag, static_cast<uint64_t>(img_idx)));

  LabeledImage out;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%05d", img_idx);
  out.id = buf;
  out.image = ImageU8(h, w);
  out.labels = LabelMap(h, w, 0);
  out.ood = LabelMap(h, w, 0);

  const uint64_t bg_key = rng.next_u64();

  const int min_r = std::max(4, h / 10);
  const int max_r = std::max(min_r + 1, h / 5);

  // Shape classes: a random rotation of a consecutive block keeps every class
  // visiting the split at the same rate.
  const int n_shapes = rng.uniform_in(2, std::min(6, k - 1));
  const int rot = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(k - 1)));
  const int amb256 = static_cast<int>(cfg.ambiguity * 256.0 + 0.5);
  std::vector<Paint> paints;
  for (int j = 0; j < n_shapes; ++j) {
    Paint p{};
    p.class_id = 1 + (rot + j) % (k - 1);
    p.shape = random_shape(rng, h, w, min_r, max_r);
    p.tex_key = rng.next_u64();
    // Drift draws happen unconditionally so the geometry stream is identical
    // for every ambiguity setting; at 0 they collapse to exact no-ops.
    p.mix_cls = (p.class_id + rng.uniform_in(1, k - 1)) % k;
    // Bimodal drift: most instances stay nearly clean, a minority drift
    // almost all the way to the other class's color. Mid-strength drift is
    // deliberately rare — it would create pixels that look uncertain yet
    // are labeled correct, which inverts the useful link between model
    // uncertainty and actual mistakes.
    const int u = rng.uniform_in(0, 255);
    if (u < 180) p.mix_t = (amb256 * u) >> 10;                      // <= amb/4
    else p.mix_t = amb256 - ((amb256 * (255 - u)) >> 9);            // >= 0.85*amb
    const int spread = (amb256 * 4) >> 8;      // brightness ±0.1·spread·4
    p.bright_num = rng.uniform_in(10 - spread, 10 + spread);
    paints.push_back(p);
  }
  if (ood_mode) {
    Paint p{};
    p.class_id = -1;
    // Anomalies are sized like lost-cargo-style obstacles: bigger than the
    // typical ID instance, so they read as objects rather than specks.
    p.shape = random_shape(rng, h, w, std::max(min_r, h / 6), std::max(max_r, h / 3));
    p.tex_key = rng.next_u64();
    // Surface color blended between two ID classes: inside the color hull the
    // net knows, but attached to the wrong (absent) texture statistics.
    const int ca = rng.uniform_in(0, k - 1);
    const int cb = (ca + rng.uniform_in(1, k - 1)) % k;
    p.ood_base = mix_q8(kIdPalette[static_cast<size_t>(ca)],
                        kIdPalette[static_cast<size_t>(cb)], rng.uniform_in(64, 192));
    paints.push_back(p);
  }

  const auto tex_of_class = [](int cls) { return static_cast<IdTex>(cls % 5); };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      Rgb c = id_texel(tex_of_class(0), kIdPalette[0], bg_key, x, y);
      int label = 0;
      int ood = 0;
      for (const auto& p : paints) {  // later paints draw on top
        if (!inside(p.shape, x, y)) continue;
        if (p.class_id >= 0) {
          Rgb base = kIdPalette[static_cast<size_t>(p.class_id)];
          if (p.mix_cls >= 0) {
            base = mix_q8(base, kIdPalette[static_cast<size_t>(p.mix_cls)], p.mix_t);
            base = shade(base, p.bright_num, 10);
          }
          c = id_texel(tex_of_class(p.class_id), base, p.tex_key, x, y);
          label = p.class_id;
          ood = 0;
        } else {
          c = ood_texel(p.ood_base, p.tex_key, x, y, p.shape.cx, p.shape.cy, p.shape.r);
          label = -1;
          ood = 1;
        }
      }
      out.image.at(y, x, 0) = static_cast<uint8_t>(c.r);
      out.image.at(y, x, 1) = static_cast<uint8_t>(c.g);
      out.image.at(y, x, 2) = static_cast<uint8_t>(c.b);
      out.labels.at(y, x) = label < 0 ? 255 : static_cast<uint8_t>(label);
      out.ood->at(y, x) = static_cast<uint8_t>(ood);
    }
  }
  if (!ood_mode) out.ood.reset();
  return out;
}

}  // namespace

DatasetManifest generate_toy_scenes(const fs::path& root, const ToySceneConfig& cfg) {
  if (cfg.num_classes < 4) throw ConfigError("toy scenes need at least 4 classes");
  if (cfg.num_classes > kToyPaletteCapacity)
    throw ConfigError("num_classes exceeds palette capacity of " +
                      std::to_string(kToyPaletteCapacity));
  if (cfg.height < 32 || cfg.width < 32) throw ConfigError("toy scenes need H,W >= 32");
  if (cfg.splits.empty()) throw ConfigError("no splits requested");

  DatasetManifest m;
  m.taxonomy = ClassTaxonomy::contiguous(cfg.num_classes);
  m.seed = cfg.seed;
  m.provenance = "procedural toy scenes";

  for (const auto& sp : cfg.splits) {
    const uint64_t split_tag = fnv1a64(sp.name);
    std::vector<std::string> ids;
    for (int i = 0; i < sp.count; ++i) {
      LabeledImage s = render_scene(cfg, sp.name, i, sp.ood_mode, split_tag);
      save_sample(root, sp.name, s);
      ids.push_back(s.id);
    }
    m.splits[sp.name] = std::move(ids);
  }
  save_manifest(root, m);
  return m;
}

DatasetManifest generate_toy_scenes(const fs::path& root, int num_images, int height,
                                    int width, int num_classes, uint64_t seed,
                                    bool ood_mode, const std::string& split) {
  ToySceneConfig cfg;
  cfg.height = height;
  cfg.width = width;
  cfg.num_classes = num_classes;
  cfg.seed = seed;
  cfg.splits.push_back({split, num_images, ood_mode});
  return generate_toy_scenes(root, cfg);
}

}  // namespace memos
