#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "s8uv/error.hpp"

namespace s8uv::nn {

struct Shape {
  std::size_t channels = 1;
  std::size_t length = 1;

  std::size_t size() const noexcept { return channels * length; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.length);
}

/// channels x length activations, channel-major.
class Tensor1D {
 public:
  Tensor1D() = default;
  Tensor1D(std::size_t channels, std::size_t length, float fill = 0.0f)
      : shape_{channels, length}, data_(channels * length, fill) {
    check_shape();
  }
  Tensor1D(std::size_t channels, std::size_t length, std::vector<float> data)
      : shape_{channels, length}, data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_.size())
      fail(ErrorCode::ShapeMismatch, "tensor data size " + std::to_string(data_.size()) + " != " + to_string(shape_));
  }

  static Tensor1D row(std::vector<float> values) {
    const auto n = values.size();
    return Tensor1D(1, n, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t channels() const noexcept { return shape_.channels; }
  std::size_t length() const noexcept { return shape_.length; }
  std::size_t size() const noexcept { return data_.size(); }

  float& at(std::size_t c, std::size_t i) noexcept { return data_[c * shape_.length + i]; }
  float at(std::size_t c, std::size_t i) const noexcept { return data_[c * shape_.length + i]; }
  std::span<float> channel(std::size_t c) noexcept { return {data_.data() + c * shape_.length, shape_.length}; }
  std::span<const float> channel(std::size_t c) const noexcept {
    return {data_.data() + c * shape_.length, shape_.length};
  }

  std::vector<float>& data() noexcept { return data_; }
  const std::vector<float>& data() const noexcept { return data_; }

  friend bool operator==(const Tensor1D&, const Tensor1D&) = default;

 private:
  void check_shape() const {
    if (shape_.channels == 0 || shape_.length == 0)
      fail(ErrorCode::ShapeMismatch, "tensor dimensions must be positive, got " + to_string(shape_));
  }

  Shape shape_{0, 0};
  std::vector<float> data_;
};

}  // namespace s8uv::nn
