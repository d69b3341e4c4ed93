#pragma once

#include <Eigen/Core>

#include <deque>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pillarmamba/common.hpp"

namespace pillarmamba {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Dense row-major tensor. Feature maps are (channels, X, Y); token sequences are (T, D).
template <typename Scalar>
class Tensor {
 public:
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Vector<Scalar>::Zero(shape_.numel())) {}
  Tensor(Shape shape, Scalar fill) : shape_(std::move(shape)), data_(Vector<Scalar>::Constant(shape_.numel(), fill)) {}
  Tensor(Shape shape, Vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == shape_.numel(),
            "tensor data length " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
  }

  static Tensor scalar(Scalar v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  std::int64_t dim(int i) const { return shape_[i]; }
  std::int64_t size() const { return data_.size(); }

  Vector<Scalar>& values() { return data_; }
  const Vector<Scalar>& values() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::span<Scalar> span() { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> span() const { return {data_.data(), static_cast<std::size_t>(data_.size())}; }

  Scalar& operator[](std::int64_t i) { return data_[i]; }
  Scalar operator[](std::int64_t i) const { return data_[i]; }

  Scalar& at(std::int64_t i, std::int64_t j) { return data_[i * shape_[1] + j]; }
  Scalar at(std::int64_t i, std::int64_t j) const { return data_[i * shape_[1] + j]; }
  Scalar& at(std::int64_t c, std::int64_t i, std::int64_t j) { return data_[(c * shape_[1] + i) * shape_[2] + j]; }
  Scalar at(std::int64_t c, std::int64_t i, std::int64_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }

  /// Row-major (rows x cols) view of the whole buffer.
  MatrixMap matrix(std::int64_t rows, std::int64_t cols) {
    require(rows * cols == size(), "matrix view does not cover tensor " + shape_.str());
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(std::int64_t rows, std::int64_t cols) const {
    require(rows * cols == size(), "matrix view does not cover tensor " + shape_.str());
    return ConstMatrixMap(data_.data(), rows, cols);
  }
  /// Rank-3 maps viewed as channels x (X*Y).
  MatrixMap planes() { return matrix(shape_[0], size() / std::max<std::int64_t>(shape_[0], 1)); }
  ConstMatrixMap planes() const { return matrix(shape_[0], size() / std::max<std::int64_t>(shape_[0], 1)); }

  Tensor reshaped(Shape shape) const {
    require(shape.numel() == size(), "reshape " + shape_.str() + " -> " + shape.str());
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  void set_zero() { data_.setZero(); }
  bool all_finite() const { return data_.allFinite(); }

 private:
  Shape shape_;
  Vector<Scalar> data_;
};

/// Trainable value with its accumulated gradient.
template <typename Scalar>
struct Param {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;

  Param() = default;
  explicit Param(Tensor<Scalar> v) : value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad = Tensor<Scalar>(value.shape()); }
};

/// Named parameter registry with stable addresses. Insertion order is the serialization order.
template <typename Scalar>
class ParamStore {
 public:
  Param<Scalar>& add(const std::string& name, Shape shape) {
    require(!index_.contains(name), "duplicate parameter name " + name);
    index_[name] = params_.size();
    names_.push_back(name);
    return params_.emplace_back(Tensor<Scalar>(std::move(shape)));
  }

  bool contains(const std::string& name) const { return index_.contains(name); }
  Param<Scalar>& get(const std::string& name) { return params_.at(lookup(name)); }
  const Param<Scalar>& get(const std::string& name) const { return params_.at(lookup(name)); }

  std::size_t size() const { return params_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  Param<Scalar>& operator[](std::size_t i) { return params_[i]; }
  const Param<Scalar>& operator[](std::size_t i) const { return params_[i]; }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractViolation("unknown parameter " + name);
    return it->second;
  }

  std::deque<Param<Scalar>> params_;
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace pillarmamba
