// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "gdasjae/errors.hpp"

namespace gdasjae {

/// Dense row-major matrix of doubles. Rows are the batch dimension; a scalar
/// is a 1x1 tensor.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      throw DimensionError("tensor " + shape_string(rows_, cols_) + " given " +
                           std::to_string(values_.size()) + " values");
    }
  }
  /// Nested-list literal, e.g. Tensor{{1, 2}, {3, 4}}.
  Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("ragged tensor literal");
      values_.insert(values_.end(), r.begin(), r.end());
    }
  }

  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor row(std::span<const double> v) {
    return Tensor(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape() const { return shape_string(rows_, cols_); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  const double& operator[](std::size_t i) const { return values_[i]; }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<const double> row_view(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * cols_, cols_);
  }

  /// Value of a 1x1 tensor.
  double item() const {
    if (values_.size() != 1) throw ContractError("item() on tensor " + shape());
    return values_[0];
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(*this, o, "+=");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
    return *this;
  }

  bool operator==(const Tensor&) const = default;

  static std::string shape_string(std::size_t r, std::size_t c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
  }

  static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
      throw DimensionError(std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
    }
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()) {}

  void zero_grad() { grad.fill(0.0); }
};

}  // namespace gdasjae
