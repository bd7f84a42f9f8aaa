#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ffnlab {

inline size_t shape_numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw std::invalid_argument("tensor extent must be positive");
    n *= static_cast<size_t>(e);
  }
  return n;
}

// Dense row-major tensor. Value and gradient buffers are shared so that
// tape closures keep them alive; the gradient buffer exists only for
// tensors that participate in a backward pass.
template <class S>
struct Tensor {
  std::vector<int> shape;
  std::shared_ptr<std::vector<S>> data;
  std::shared_ptr<std::vector<S>> grad;

  Tensor() = default;

  static Tensor zeros(std::vector<int> shape) {
    Tensor t;
    size_t n = shape_numel(shape);
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<S>>(n, S(0));
    return t;
  }

  static Tensor from(std::vector<int> shape, std::vector<S> values) {
    Tensor t;
    if (shape_numel(shape) != values.size())
      throw std::invalid_argument("tensor data length does not match shape");
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<S>>(std::move(values));
    return t;
  }

  size_t numel() const { return data ? data->size() : 0; }
  int dim(size_t i) const { return shape.at(i); }
  size_t rank() const { return shape.size(); }

  bool is_scalar() const { return numel() == 1; }
  S scalar() const {
    assert(is_scalar());
    return (*data)[0];
  }

  S* ptr() { return data->data(); }
  const S* ptr() const { return data->data(); }

  void ensure_grad() {
    if (!grad) grad = std::make_shared<std::vector<S>>(data->size(), S(0));
  }
  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), S(0));
  }

  bool all_finite() const {
    for (S v : *data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace ffnlab
