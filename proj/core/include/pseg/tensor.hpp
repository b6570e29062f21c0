#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pseg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& dims);
std::string shape_str(const Shape& dims);

/// Dense row-major f32 tensor. Every extent is >= 1 and data().size() always
/// equals the product of the extents. A default-constructed tensor is "null"
/// (rank 0, no data) and is only good for assignment.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims, float fill = 0.0f);
  Tensor(Shape dims, std::vector<float> values);

  static Tensor from(std::initializer_list<float> values);

  bool empty() const noexcept { return data_.empty(); }
  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  const std::vector<float>& values() const noexcept { return data_; }

  float& operator[](std::size_t i) noexcept { return data_[i]; }
  float operator[](std::size_t i) const noexcept { return data_[i]; }

  float& at(std::size_t i, std::size_t j) noexcept { return data_[i * dims_[1] + j]; }
  float at(std::size_t i, std::size_t j) const noexcept { return data_[i * dims_[1] + j]; }
  float& at(std::size_t i, std::size_t j, std::size_t k) noexcept {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }
  float at(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return data_[(i * dims_[1] + j) * dims_[2] + k];
  }

  /// Row i of a tensor viewed as (dims[0], rest...).
  std::span<float> row(std::size_t i);
  std::span<const float> row(std::size_t i) const;

  /// Same data, new extents with equal element count.
  Tensor reshaped(Shape dims) const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape dims_;
  std::vector<float> data_;
};

/// Bitwise comparison (distinguishes -0.0 from 0.0 and compares NaN payloads).
bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

/// Softmax along `axis`, computed with max-subtraction and double accumulation.
Tensor softmax(const Tensor& x, std::size_t axis);

/// Divides each slice along `axis` by max(||slice||_2, eps).
Tensor l2_normalize(const Tensor& x, std::size_t axis, float eps = 1e-8f);

/// Bilinear resampling of an (h, w) or (h, w, c) tensor, align_corners=false
/// (half-pixel centres, edge clamping). Same size is an exact copy.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);

}  // namespace pseg
