#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ftip::nn {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

// Dense n-dimensional array, row-major. The leading extent of a batch tensor
// is the sample index, so each sample occupies one contiguous block and the
// whole tensor reads as a column-major (sample_size x N) matrix.
template <typename Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)) {
    check_extents();
    data_ = Vector<Scalar>::Zero(shape_product(shape_));
  }

  Tensor(Shape shape, Vector<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (shape_product(shape_) != data_.size())
      throw std::invalid_argument("tensor shape " + shape_string(shape_) +
                                  " does not match data length " +
                                  std::to_string(data_.size()));
  }

  const Shape& shape() const { return shape_; }
  Eigen::Index rank() const { return static_cast<Eigen::Index>(shape_.size()); }
  Eigen::Index extent(std::size_t axis) const { return shape_.at(axis); }
  Eigen::Index size() const { return data_.size(); }

  const Vector<Scalar>& data() const { return data_; }
  Vector<Scalar>& data() { return data_; }

  Scalar operator[](Eigen::Index i) const { return data_[i]; }
  Scalar& operator[](Eigen::Index i) { return data_[i]; }

  // (product of trailing extents) x (leading extent) view.
  Eigen::Map<const Matrix<Scalar>> samples() const {
    return {data_.data(), data_.size() / shape_.front(), shape_.front()};
  }
  Eigen::Map<Matrix<Scalar>> samples() {
    return {data_.data(), data_.size() / shape_.front(), shape_.front()};
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  void check_extents() const {
    if (shape_.empty()) throw std::invalid_argument("tensor needs rank >= 1");
    for (auto e : shape_)
      if (e < 1)
        throw std::invalid_argument("tensor extents must be >= 1, got " +
                                    shape_string(shape_));
  }

  Shape shape_;
  Vector<Scalar> data_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace ftip::nn
