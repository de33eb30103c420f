#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "floeseg/error.hpp"

namespace floeseg {

/// Dense row-major tensor. Activations use [B,C,H,W], convolution kernels
/// [Cout,Cin,Kh,Kw], up-convolution kernels [Cin,Cout,2,2].
template <typename Scalar>
class Tensor {
 public:
  using Index = Eigen::Index;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;

  explicit Tensor(std::vector<Index> shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    for (Index e : shape_) {
      if (e < 0) throw Error(ErrorCode::ShapeMismatch, "negative extent");
    }
    values_ = Vector::Constant(element_count(shape_), fill);
  }

  Tensor(std::vector<Index> shape, Vector values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != element_count(shape_)) {
      throw Error(ErrorCode::ShapeMismatch, "data length does not match shape");
    }
  }

  static Index element_count(const std::vector<Index>& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
  }

  const std::vector<Index>& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(std::size_t i) const { return shape_.at(i); }
  Index size() const { return values_.size(); }

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  Scalar& at(Index b, Index c, Index y, Index x) {
    return values_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  Scalar at(Index b, Index c, Index y, Index x) const {
    return values_[((b * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  /// Sample b of a 4-D tensor viewed as a [C, H*W] matrix.
  MatrixMap sample(Index b) {
    const Index plane = shape_[1] * shape_[2] * shape_[3];
    return MatrixMap(values_.data() + b * plane, shape_[1], shape_[2] * shape_[3]);
  }
  ConstMatrixMap sample(Index b) const {
    const Index plane = shape_[1] * shape_[2] * shape_[3];
    return ConstMatrixMap(values_.data() + b * plane, shape_[1], shape_[2] * shape_[3]);
  }

  /// The whole tensor viewed as [dim0, rest].
  MatrixMap matrix() { return MatrixMap(values_.data(), shape_[0], shape_[0] ? size() / shape_[0] : 0); }
  ConstMatrixMap matrix() const {
    return ConstMatrixMap(values_.data(), shape_[0], shape_[0] ? size() / shape_[0] : 0);
  }

  bool all_finite() const { return values_.allFinite(); }

  void set_zero() { values_.setZero(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  std::vector<Index> shape_;
  Vector values_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

std::string shape_string(const std::vector<Eigen::Index>& shape);

}  // namespace floeseg
