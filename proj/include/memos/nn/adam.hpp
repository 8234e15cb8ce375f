#pragma once

#include <cmath>
#include <vector>

#include "memos/nn/ops.hpp"

namespace memos::nn {

// Plain Adam with bias correction. Parameter pointers must outlive the
// optimizer; moment buffers are allocated up front so step order is fixed
// and runs stay reproducible.
class Adam {
 public:
  explicit Adam(std::vector<Param> params, float lr, float beta1 = 0.9f, float beta2 = 0.999f,
                float eps = 1e-8f)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Param& p : params_) {
      Tensor m, v;
      m.resize(p.value->shape());
      v.resize(p.value->shape());
      m.zero();
      v.zero();
      m_.push_back(std::move(m));
      v_.push_back(std::move(v));
    }
  }

  void zero_grad() {
    for (Param& p : params_) p.grad->zero();
  }

  void step() {
    ++t_;
    const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& w = *params_[i].value;
      const Tensor& g = *params_[i].grad;
      Tensor& m = m_[i];
      Tensor& v = v_[i];
      for (size_t k = 0; k < w.size(); ++k) {
        m[k] = beta1_ * m[k] + (1.0f - beta1_) * g[k];
        v[k] = beta2_ * v[k] + (1.0f - beta2_) * g[k] * g[k];
        const float mh = m[k] / bc1;
        const float vh = v[k] / bc2;
        w[k] -= lr_ * mh / (std::sqrt(vh) + eps_);
      }
    }
  }

  void set_lr(float lr) { lr_ = lr; }
  float lr() const { return lr_; }

 private:
  std::vector<Param> params_;
  std::vector<Tensor> m_, v_;
  float lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace memos::nn
