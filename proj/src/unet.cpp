#include "memos/nn/unet.hpp"

#include <cstring>

#include "memos/errors.hpp"

namespace memos::nn {

Tensor UNet::ConvBlock::forward(const Tensor& x, bool train) {
  return r2.forward(c2.forward(r1.forward(c1.forward(x, train), train), train), train);
}

Tensor UNet::ConvBlock::backward(const Tensor& dy) {
  return c1.backward(r1.backward(c2.backward(r2.backward(dy))));
}

void UNet::ConvBlock::collect(const std::string& prefix, std::vector<Param>& out) {
  c1.collect_params(prefix + ".c1", out);
  c2.collect_params(prefix + ".c2", out);
}

UNet::UNet(const UNetConfig& cfg) : cfg_(cfg) {
  if (cfg.depth < 2) throw ConfigError("unet depth must be >= 2");
  if (cfg.base_width < 1) throw ConfigError("unet base_width must be >= 1");

  Rng rng(derive_seed(cfg.seed, fnv1a64("unet_init")));
  const auto width = [&](int level) { return cfg.base_width << level; };

  for (int i = 0; i < cfg.depth; ++i) {
    const int cin = i == 0 ? cfg.in_channels : width(i - 1);
    ConvBlock b;
    b.c1 = Conv2d(cin, width(i), 3);
    b.c2 = Conv2d(width(i), width(i), 3);
    b.c1.init_he(rng);
    b.c2.init_he(rng);
    enc_.push_back(std::move(b));
    skip_channels_.push_back(width(i));
  }
  pools_.resize(static_cast<size_t>(cfg.depth - 1));
  ups_.resize(static_cast<size_t>(cfg.depth - 1));
  for (int j = cfg.depth - 2; j >= 0; --j) {
    ConvBlock b;
    b.c1 = Conv2d(width(j + 1) + width(j), width(j), 3);
    b.c2 = Conv2d(width(j), width(j), 3);
    b.c1.init_he(rng);
    b.c2.init_he(rng);
    dec_.insert(dec_.begin(), std::move(b));  // dec_[j] ends up at index j
  }
  head_ = Conv2d(cfg.base_width, cfg.out_channels, 1);
  head_.init_he(rng);
}

Tensor UNet::forward(const Tensor& x, bool train) {
  const int d = cfg_.depth;
  const int mult = spatial_multiple();
  if (x.dim(2) % mult || x.dim(3) % mult)
    throw ShapeError("input spatial dims must be divisible by " + std::to_string(mult));
  if (x.dim(1) != cfg_.in_channels)
    throw ShapeError("expected " + std::to_string(cfg_.in_channels) + " input channels, got " +
                     std::to_string(x.dim(1)));

  std::vector<Tensor> skips(static_cast<size_t>(d));
  skips[0] = enc_[0].forward(x, train);
  for (int i = 1; i < d; ++i)
    skips[static_cast<size_t>(i)] = enc_[static_cast<size_t>(i)].forward(
        pools_[static_cast<size_t>(i - 1)].forward(skips[static_cast<size_t>(i - 1)], train), train);

  Tensor u = std::move(skips[static_cast<size_t>(d - 1)]);
  for (int j = d - 2; j >= 0; --j) {
    Tensor up = ups_[static_cast<size_t>(j)].forward(u);
    u = dec_[static_cast<size_t>(j)].forward(concat_channels(up, skips[static_cast<size_t>(j)]), train);
  }
  return head_.forward(u, train);
}

Tensor UNet::backward(const Tensor& dy) {
  const int d = cfg_.depth;
  Tensor du = head_.backward(dy);

  std::vector<Tensor> dskips(static_cast<size_t>(d));
  for (int j = 0; j <= d - 2; ++j) {
    Tensor dcat = dec_[static_cast<size_t>(j)].backward(du);
    Tensor dup;
    split_channels(dcat, skip_channels_[static_cast<size_t>(j + 1)], &dup,
                   &dskips[static_cast<size_t>(j)]);
    du = ups_[static_cast<size_t>(j)].backward(dup);
  }

  // du now holds the decoder-path gradient for the bottom encoder output.
  Tensor ds = std::move(du);
  for (int i = d - 1; i >= 1; --i) {
    Tensor dp = pools_[static_cast<size_t>(i - 1)].backward(enc_[static_cast<size_t>(i)].backward(ds));
    ds = std::move(dskips[static_cast<size_t>(i - 1)]);
    for (size_t q = 0; q < ds.size(); ++q) ds[q] += dp[q];
  }
  return enc_[0].backward(ds);
}

Tensor UNet::forward_padded(const Tensor& x) {
  const int mult = spatial_multiple();
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int hp = (h + mult - 1) / mult * mult;
  const int wp = (w + mult - 1) / mult * mult;
  if (hp == h && wp == w) return forward(x, false);

  Tensor xp({n, c, hp, wp});
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci)
      for (int y = 0; y < h; ++y)
        std::memcpy(&xp.at(i, ci, y, 0), x.data() + ((static_cast<size_t>(i) * c + ci) * h + y) * w,
                    sizeof(float) * w);

  const Tensor yp = forward(xp, false);
  Tensor y({n, cfg_.out_channels, h, w});
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < cfg_.out_channels; ++ci)
      for (int yy = 0; yy < h; ++yy)
        std::memcpy(&y.at(i, ci, yy, 0),
                    yp.data() + ((static_cast<size_t>(i) * cfg_.out_channels + ci) * hp + yy) * wp,
                    sizeof(float) * w);
  return y;
}

std::vector<Param> UNet::params() {
  std::vector<Param> out;
  for (size_t i = 0; i < enc_.size(); ++i) enc_[i].collect("enc" + std::to_string(i), out);
  for (size_t j = 0; j < dec_.size(); ++j) dec_[j].collect("dec" + std::to_string(j), out);
  head_.collect_params("head", out);
  return out;
}

}  // namespace memos::nn
