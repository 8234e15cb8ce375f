#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

#include "memos/errors.hpp"

namespace memos {

// Dense float32 array, row-major over the given shape. Network activations
// and weights use this; probability/entropy maps on the metric path are kept
// in double elsewhere.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) { resize(std::move(shape)); }

  void resize(std::vector<int> shape) {
    shape_ = std::move(shape);
    size_t n = 1;
    for (int d : shape_) {
      if (d < 0) throw ShapeError("negative tensor dimension");
      n *= static_cast<size_t>(d);
    }
    data_.assign(n, 0.0f);
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }

  float& operator[](size_t i) { return data_[i]; }
  float operator[](size_t i) const { return data_[i]; }

  // Indexing for the layouts the networks use: {C,H,W} and {N,C,H,W}.
  float& at(int c, int y, int x) {
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  float at(int c, int y, int x) const {
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  float& at(int n, int c, int y, int x) {
    return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  float at(int n, int c, int y, int x) const {
    return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  void zero() { std::fill(data_.begin(), data_.end(), 0.0f); }
  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

}  // namespace memos
