#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcnet {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

/// Raised when operand shapes are inconsistent with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a value leaves the finite range.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

/// Dense row-major N-d array. The last axis is the fastest. Storage is an
/// Eigen column vector so whole-tensor arithmetic goes through Eigen
/// expressions via array() and matrix views.
template <typename Scalar>
class BasicTensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMajorMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0)) : shape_(std::move(shape)) {
    for (Index extent : shape_) {
      if (extent <= 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape_));
    }
    data_ = Storage::Constant(shape_size(shape_), fill);
  }

  static BasicTensor from_values(Shape shape, std::initializer_list<Scalar> values) {
    return from_values(std::move(shape), std::span<const Scalar>(values.begin(), values.size()));
  }

  static BasicTensor from_values(Shape shape, std::span<const Scalar> values) {
    BasicTensor t(std::move(shape));
    if (static_cast<Index>(values.size()) != t.size()) {
      throw ShapeError("value count " + std::to_string(values.size()) + " does not match shape " +
                       shape_string(t.shape_));
    }
    std::copy(values.begin(), values.end(), t.data_.data());
    return t;
  }

  static BasicTensor zeros_like(const BasicTensor& other) { return BasicTensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(Index axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> values() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> values() const { return {data_.data(), static_cast<std::size_t>(data_.size())}; }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar& operator()(Index r, Index c) { return data_[r * shape_[1] + c]; }
  Scalar operator()(Index r, Index c) const { return data_[r * shape_[1] + c]; }

  Scalar& operator()(Index ch, Index r, Index c) { return data_[(ch * shape_[1] + r) * shape_[2] + c]; }
  Scalar operator()(Index ch, Index r, Index c) const {
    return data_[(ch * shape_[1] + r) * shape_[2] + c];
  }

  /// Matrix view of channel `ch` of a rank-3 tensor, or of the whole tensor
  /// when rank is 2.
  MatrixMap plane(Index ch = 0) {
    const auto [rows, cols] = plane_dims();
    return MatrixMap(data_.data() + ch * rows * cols, rows, cols);
  }
  ConstMatrixMap plane(Index ch = 0) const {
    const auto [rows, cols] = plane_dims();
    return ConstMatrixMap(data_.data() + ch * rows * cols, rows, cols);
  }

  /// Leading axis against the flattened remainder.
  MatrixMap as_matrix() { return MatrixMap(data_.data(), shape_.front(), size() / shape_.front()); }
  ConstMatrixMap as_matrix() const {
    return ConstMatrixMap(data_.data(), shape_.front(), size() / shape_.front());
  }

  bool all_finite() const { return data_.allFinite(); }

  BasicTensor reshaped(Shape shape) const {
    if (shape_size(shape) != size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    BasicTensor out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  template <typename Other>
  BasicTensor<Other> cast() const {
    BasicTensor<Other> out(shape_);
    out.array() = data_.template cast<Other>();
    return out;
  }

  BasicTensor& operator+=(const BasicTensor& rhs) {
    require_same_shape(*this, rhs, "operator+=");
    data_ += rhs.data_;
    return *this;
  }
  BasicTensor& operator-=(const BasicTensor& rhs) {
    require_same_shape(*this, rhs, "operator-=");
    data_ -= rhs.data_;
    return *this;
  }
  BasicTensor& operator*=(Scalar s) {
    data_ *= s;
    return *this;
  }

  friend BasicTensor operator+(BasicTensor lhs, const BasicTensor& rhs) { return lhs += rhs; }
  friend BasicTensor operator-(BasicTensor lhs, const BasicTensor& rhs) { return lhs -= rhs; }
  friend BasicTensor operator*(BasicTensor lhs, Scalar s) { return lhs *= s; }
  friend BasicTensor operator*(Scalar s, BasicTensor rhs) { return rhs *= s; }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

  static void require_same_shape(const BasicTensor& a, const BasicTensor& b, const char* what) {
    if (a.shape_ != b.shape_) {
      throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape_) + " vs " +
                       shape_string(b.shape_));
    }
  }

 private:
  std::pair<Index, Index> plane_dims() const {
    if (shape_.size() == 2) return {shape_[0], shape_[1]};
    if (shape_.size() == 3) return {shape_[1], shape_[2]};
    throw ShapeError("plane view needs a rank-2 or rank-3 tensor, got " + shape_string(shape_));
  }

  Shape shape_;
  Storage data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

/// Gradients returned by every backward operation.
template <typename Scalar>
struct BasicLayerGrads {
  BasicTensor<Scalar> d_input;
  std::vector<BasicTensor<Scalar>> d_params;
};

using LayerGrads = BasicLayerGrads<double>;

template <typename Scalar>
void require_rank(const BasicTensor<Scalar>& t, Index rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

}  // namespace fcnet
