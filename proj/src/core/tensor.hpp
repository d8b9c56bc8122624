#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "types.hpp"

namespace quiz {

// Dense row-major float tensor; last axis varies fastest. Value semantics,
// no views: layers index explicitly.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(size_t(numel_of(shape_)), 0.0f);
  }
  Tensor(std::vector<int64_t> shape, std::vector<float> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (int64_t(data_.size()) != numel_of(shape_))
      throw_invalid("tensor data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t s : shape) n *= s;
    return n;
  }

  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(size_t i) const { return shape_.at(i); }
  size_t ndim() const { return shape_.size(); }
  int64_t numel() const { return int64_t(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  float& operator[](int64_t i) { return data_[size_t(i)]; }
  float operator[](int64_t i) const { return data_[size_t(i)]; }

  void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(0.0f); }

  // Reinterpret with a new shape of identical element count.
  Tensor reshaped(std::vector<int64_t> shape) const {
    if (numel_of(shape) != numel()) throw_invalid("reshape element count mismatch");
    return Tensor(std::move(shape), data_);
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
  std::vector<int64_t> shape_;
  std::vector<float> data_;
};

}  // namespace quiz
