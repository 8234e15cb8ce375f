#pragma once

#include <string>
#include <vector>

#include "memos/nn/ops.hpp"

namespace memos::nn {

struct UNetConfig {
  int in_channels = 3;
  int out_channels = 1;
  int depth = 3;       // encoder stages; spatial size shrinks 2^(depth-1)
  int base_width = 16; // channels at the first stage, doubling per stage
  uint64_t seed = 0;
};

// Compact U-shaped encoder-decoder: two 3x3 conv+ReLU per stage, 2x2 max
// pooling down, nearest upsampling + skip concat up, 1x1 head. No
// normalization layers; He init + Adam are enough at this scale and keep
// runs bit-reproducible.
class UNet {
 public:
  UNet() = default;
  explicit UNet(const UNetConfig& cfg);

  // x {N,in,H,W} with H,W divisible by 2^(depth-1); returns {N,out,H,W}.
  Tensor forward(const Tensor& x, bool train);
  // dy {N,out,H,W}; accumulates parameter grads, returns dx.
  Tensor backward(const Tensor& dy);

  // Inference on arbitrary H,W: zero-pads up to the required multiple and
  // crops the logits back.
  Tensor forward_padded(const Tensor& x);

  std::vector<Param> params();
  const UNetConfig& config() const { return cfg_; }
  int spatial_multiple() const { return 1 << (cfg_.depth - 1); }

 private:
  struct ConvBlock {
    Conv2d c1, c2;
    ReLU r1, r2;
    Tensor forward(const Tensor& x, bool train);
    Tensor backward(const Tensor& dy);
    void collect(const std::string& prefix, std::vector<Param>& out);
  };

  UNetConfig cfg_;
  std::vector<ConvBlock> enc_;   // depth blocks
  std::vector<MaxPool2> pools_;  // depth-1
  std::vector<ConvBlock> dec_;   // depth-1, dec_[j] produces level-j features
  std::vector<Upsample2> ups_;   // depth-1
  Conv2d head_;
  std::vector<int> skip_channels_;
};

}  // namespace memos::nn
