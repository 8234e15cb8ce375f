#include "memos/nn/ops.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

#include "memos/errors.hpp"

namespace memos::nn {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXf>;

void im2col(const float* src, int c, int h, int w, int k, int pad, float* dst) {
  const size_t plane = static_cast<size_t>(h) * w;
  size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    const float* s = src + ci * plane;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        float* d = dst + row * plane;
        const int oy = ky - pad, ox = kx - pad;
        for (int y = 0; y < h; ++y) {
          const int sy = y + oy;
          if (sy < 0 || sy >= h) {
            std::memset(d + static_cast<size_t>(y) * w, 0, sizeof(float) * w);
            continue;
          }
          float* drow = d + static_cast<size_t>(y) * w;
          const float* srow = s + static_cast<size_t>(sy) * w;
          const int x0 = std::max(0, -ox);
          const int x1 = std::min(w, w - ox);
          if (x0 > 0) std::memset(drow, 0, sizeof(float) * x0);
          if (x1 > x0) std::memcpy(drow + x0, srow + x0 + ox, sizeof(float) * (x1 - x0));
          if (x1 < w) std::memset(drow + x1, 0, sizeof(float) * (w - x1));
        }
      }
    }
  }
}

void col2im(const float* col, int c, int h, int w, int k, int pad, float* dst) {
  const size_t plane = static_cast<size_t>(h) * w;
  size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    float* d = dst + ci * plane;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++row) {
        const float* s = col + row * plane;
        const int oy = ky - pad, ox = kx - pad;
        for (int y = 0; y < h; ++y) {
          const int sy = y + oy;
          if (sy < 0 || sy >= h) continue;
          float* drow = d + static_cast<size_t>(sy) * w;
          const float* srow = s + static_cast<size_t>(y) * w;
          const int x0 = std::max(0, -ox);
          const int x1 = std::min(w, w - ox);
          for (int x = x0; x < x1; ++x) drow[x + ox] += srow[x];
        }
      }
    }
  }
}

Conv2d::Conv2d(int in_ch, int out_ch, int ksize)
    : in_ch_(in_ch), out_ch_(out_ch), k_(ksize), pad_(ksize / 2) {
  w.resize({out_ch, in_ch * ksize * ksize});
  b.resize({out_ch});
  gw.resize({out_ch, in_ch * ksize * ksize});
  gb.resize({out_ch});
}

void Conv2d::init_he(Rng& rng) {
  const float stddev = std::sqrt(2.0f / static_cast<float>(in_ch_ * k_ * k_));
  for (size_t i = 0; i < w.size(); ++i) w[i] = stddev * static_cast<float>(rng.normal());
  b.zero();
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  const int n = x.dim(0), h = x.dim(2), wd = x.dim(3);
  if (x.dim(1) != in_ch_)
    throw ShapeError("conv input has " + std::to_string(x.dim(1)) + " channels, expected " +
                     std::to_string(in_ch_));
  const int hw = h * wd;
  const int krows = in_ch_ * k_ * k_;
  Tensor y({n, out_ch_, h, wd});

  if (train) {
    cols_.resize(static_cast<size_t>(n));
    x_shape_ = x.shape();
  }
  Tensor scratch;
  MapConstMat wm(w.data(), out_ch_, krows);
  MapVec bv(b.data(), out_ch_);
  for (int i = 0; i < n; ++i) {
    Tensor& col = train ? cols_[static_cast<size_t>(i)] : scratch;
    if (col.shape() != std::vector<int>{krows, hw}) col.resize({krows, hw});
    im2col(x.data() + static_cast<size_t>(i) * in_ch_ * hw, in_ch_, h, wd, k_, pad_, col.data());
    MapConstMat cm(col.data(), krows, hw);
    MapMat ym(y.data() + static_cast<size_t>(i) * out_ch_ * hw, out_ch_, hw);
    ym.noalias() = wm * cm;
    ym.colwise() += bv;
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& dy) {
  if (cols_.empty()) throw TrainingError("conv backward without cached forward");
  const int n = x_shape_[0], h = x_shape_[2], wd = x_shape_[3];
  const int hw = h * wd;
  const int krows = in_ch_ * k_ * k_;

  Tensor dx({n, in_ch_, h, wd});
  Tensor dcol({krows, hw});
  MapMat gwm(gw.data(), out_ch_, krows);
  MapVec gbv(gb.data(), out_ch_);
  MapConstMat wm(w.data(), out_ch_, krows);
  for (int i = 0; i < n; ++i) {
    MapConstMat dym(dy.data() + static_cast<size_t>(i) * out_ch_ * hw, out_ch_, hw);
    MapConstMat cm(cols_[static_cast<size_t>(i)].data(), krows, hw);
    gwm.noalias() += dym * cm.transpose();
    gbv.noalias() += dym.rowwise().sum();
    MapMat dcm(dcol.data(), krows, hw);
    dcm.noalias() = wm.transpose() * dym;
    col2im(dcol.data(), in_ch_, h, wd, k_, pad_,
           dx.data() + static_cast<size_t>(i) * in_ch_ * hw);
  }
  return dx;
}

void Conv2d::collect_params(const std::string& prefix, std::vector<Param>& out) {
  out.push_back({prefix + ".w", &w, &gw});
  out.push_back({prefix + ".b", &b, &gb});
}

Tensor ReLU::forward(const Tensor& x, bool train) {
  Tensor y = x;
  if (train) mask_.resize(x.shape());
  for (size_t i = 0; i < y.size(); ++i) {
    const bool pos = y[i] > 0.0f;
    if (!pos) y[i] = 0.0f;
    if (train) mask_[i] = pos ? 1.0f : 0.0f;
  }
  return y;
}

Tensor ReLU::backward(const Tensor& dy) const {
  Tensor dx = dy;
  for (size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
  return dx;
}

Tensor MaxPool2::forward(const Tensor& x, bool train) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 || w % 2) throw ShapeError("max pool needs even spatial dims");
  const int ho = h / 2, wo = w / 2;
  Tensor y({n, c, ho, wo});
  if (train) {
    argmax_.assign(static_cast<size_t>(n) * c * ho * wo, 0);
    x_shape_ = x.shape();
  }
  size_t oi = 0;
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      const float* plane = x.data() + (static_cast<size_t>(i) * c + ci) * h * w;
      for (int y0 = 0; y0 < ho; ++y0) {
        for (int x0 = 0; x0 < wo; ++x0, ++oi) {
          const int base = (2 * y0) * w + 2 * x0;
          int best = base;
          float bv = plane[base];
          const int cand[3] = {base + 1, base + w, base + w + 1};
          for (int cc : cand) {
            if (plane[cc] > bv) {
              bv = plane[cc];
              best = cc;
            }
          }
          y[oi] = bv;
          if (train) argmax_[oi] = best;
        }
      }
    }
  }
  return y;
}

Tensor MaxPool2::backward(const Tensor& dy) const {
  if (argmax_.empty()) throw TrainingError("max pool backward without cached forward");
  const int n = x_shape_[0], c = x_shape_[1], h = x_shape_[2], w = x_shape_[3];
  Tensor dx({n, c, h, w});
  const int ho = h / 2, wo = w / 2;
  size_t oi = 0;
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      float* plane = dx.data() + (static_cast<size_t>(i) * c + ci) * h * w;
      for (int p = 0; p < ho * wo; ++p, ++oi) plane[argmax_[oi]] += dy[oi];
    }
  }
  return dx;
}

Tensor Upsample2::forward(const Tensor& x) const {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, c, 2 * h, 2 * w});
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      const float* sp = x.data() + (static_cast<size_t>(i) * c + ci) * h * w;
      float* dp = y.data() + (static_cast<size_t>(i) * c + ci) * 4 * h * w;
      for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
          const float v = sp[yy * w + xx];
          float* d = dp + (2 * yy) * (2 * w) + 2 * xx;
          d[0] = v;
          d[1] = v;
          d[2 * w] = v;
          d[2 * w + 1] = v;
        }
      }
    }
  }
  return y;
}

Tensor Upsample2::backward(const Tensor& dy) const {
  const int n = dy.dim(0), c = dy.dim(1), h = dy.dim(2) / 2, w = dy.dim(3) / 2;
  Tensor dx({n, c, h, w});
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      float* dp = dx.data() + (static_cast<size_t>(i) * c + ci) * h * w;
      const float* sp = dy.data() + (static_cast<size_t>(i) * c + ci) * 4 * h * w;
      for (int yy = 0; yy < h; ++yy) {
        for (int xx = 0; xx < w; ++xx) {
          const float* s = sp + (2 * yy) * (2 * w) + 2 * xx;
          dp[yy * w + xx] = s[0] + s[1] + s[2 * w] + s[2 * w + 1];
        }
      }
    }
  }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
  if (b.dim(0) != n || b.dim(2) != h || b.dim(3) != w)
    throw ShapeError("concat: spatial/batch mismatch");
  Tensor y({n, ca + cb, h, w});
  const size_t plane = static_cast<size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    std::memcpy(y.data() + static_cast<size_t>(i) * (ca + cb) * plane,
                a.data() + static_cast<size_t>(i) * ca * plane, sizeof(float) * ca * plane);
    std::memcpy(y.data() + (static_cast<size_t>(i) * (ca + cb) + ca) * plane,
                b.data() + static_cast<size_t>(i) * cb * plane, sizeof(float) * cb * plane);
  }
  return y;
}

void split_channels(const Tensor& d, int ca, Tensor* da, Tensor* db) {
  const int n = d.dim(0), c = d.dim(1), h = d.dim(2), w = d.dim(3);
  const int cb = c - ca;
  da->resize({n, ca, h, w});
  db->resize({n, cb, h, w});
  const size_t plane = static_cast<size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    std::memcpy(da->data() + static_cast<size_t>(i) * ca * plane,
                d.data() + static_cast<size_t>(i) * c * plane, sizeof(float) * ca * plane);
    std::memcpy(db->data() + static_cast<size_t>(i) * cb * plane,
                d.data() + (static_cast<size_t>(i) * c + ca) * plane, sizeof(float) * cb * plane);
  }
}

}  // namespace memos::nn
