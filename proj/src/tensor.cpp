#include "sta/tensor.hpp"

#include <algorithm>
#include <string>

#include "sta/error.hpp"

namespace sta {

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_volume(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape volume " + std::to_string(shape_volume(shape_)));
  }
}

std::size_t Tensor::offset(std::initializer_list<std::int64_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("tensor index rank mismatch");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i < 0 || i >= shape_[axis]) throw ShapeError("tensor index out of range");
    off = off * static_cast<std::size_t>(shape_[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return off;
}

std::size_t Tensor::count_nonzero() const {
  return static_cast<std::size_t>(std::count_if(data_.begin(), data_.end(), [](float v) { return v != 0.0f; }));
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

}  // namespace sta
