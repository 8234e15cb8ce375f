#pragma once

#include <string>
#include <vector>

#include "memos/rng.hpp"
#include "memos/tensor.hpp"

namespace memos::nn {

// Named view of a trainable tensor and its gradient accumulator.
struct Param {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

// im2col for square kernels with "same" padding; dst is {c*k*k, h*w} row-major.
void im2col(const float* src, int c, int h, int w, int k, int pad, float* dst);
// Scatter-add transpose of im2col.
void col2im(const float* col, int c, int h, int w, int k, int pad, float* dst);

// 2-D convolution with same padding, bias, He init. Forward caches the im2col
// buffers in train mode so backward is a pair of GEMMs.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_ch, int out_ch, int ksize);

  void init_he(Rng& rng);
  Tensor forward(const Tensor& x, bool train);  // x {N,C,H,W} -> {N,out,H,W}
  Tensor backward(const Tensor& dy);            // accumulates gw/gb, returns dx
  void collect_params(const std::string& prefix, std::vector<Param>& out);

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

  Tensor w;   // {out_ch, in_ch*k*k}
  Tensor b;   // {out_ch}
  Tensor gw;
  Tensor gb;

 private:
  int in_ch_ = 0, out_ch_ = 0, k_ = 0, pad_ = 0;
  std::vector<Tensor> cols_;  // per batch item, train mode only
  std::vector<int> x_shape_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy) const;

 private:
  Tensor mask_;
};

// 2x2 max pooling, stride 2. Requires even spatial dims.
class MaxPool2 {
 public:
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& dy) const;

 private:
  std::vector<int32_t> argmax_;  // source offset within each input plane
  std::vector<int> x_shape_;
};

// Nearest-neighbor 2x upsampling.
class Upsample2 {
 public:
  Tensor forward(const Tensor& x) const;
  Tensor backward(const Tensor& dy) const;  // sums each 2x2 cell
};

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& d, int ca, Tensor* da, Tensor* db);

}  // namespace memos::nn
