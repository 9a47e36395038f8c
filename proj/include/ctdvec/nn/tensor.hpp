// ctdvec/nn/tensor.hpp
//
// Copyright 2026  The ctdvec Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CTDVEC_NN_TENSOR_HPP
#define CTDVEC_NN_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ctdvec/base.hpp"

namespace ctdvec::nn {

using Shape = std::vector<Eigen::Index>;

inline Eigen::Index NumElements(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), Eigen::Index{1},
                         std::multiplies<>());
}

inline std::string ShapeString(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor.  product(shape) == size() always.
template <typename Real>
class Tensor {
 public:
  using MatrixMap = Eigen::Map<MatrixR<Real>>;
  using ConstMatrixMap = Eigen::Map<const MatrixR<Real>>;

  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0))
      : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}
  Tensor(Shape shape, const std::vector<Real> &data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (static_cast<Eigen::Index>(data_.size()) != NumElements(shape_))
      Fail(ErrorCode::kShape, "tensor data length ", data_.size(),
           " does not match shape ", ShapeString(shape_));
  }

  const Shape &shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  Eigen::Index dim(std::size_t i) const { return shape_.at(i); }
  Eigen::Index size() const { return static_cast<Eigen::Index>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Real *data() { return data_.data(); }
  const Real *data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }
  Real &operator[](Eigen::Index i) { return data_[i]; }
  Real operator[](Eigen::Index i) const { return data_[i]; }

  /// Leading dims flattened into rows, last dim as columns.
  Eigen::Index Rows() const { return shape_.empty() ? 0 : size() / shape_.back(); }
  Eigen::Index Cols() const { return shape_.empty() ? 0 : shape_.back(); }
  MatrixMap Matrix() { return MatrixMap(data(), Rows(), Cols()); }
  ConstMatrixMap Matrix() const { return ConstMatrixMap(data(), Rows(), Cols()); }
  MatrixMap Matrix(Eigen::Index rows, Eigen::Index cols) {
    return MatrixMap(data(), rows, cols);
  }
  ConstMatrixMap Matrix(Eigen::Index rows, Eigen::Index cols) const {
    return ConstMatrixMap(data(), rows, cols);
  }
  Eigen::Map<VectorR<Real>> Flat() { return {data(), size()}; }
  Eigen::Map<const VectorR<Real>> Flat() const { return {data(), size()}; }

  void Reshape(Shape shape) {
    if (NumElements(shape) != size())
      Fail(ErrorCode::kShape, "cannot reshape ", ShapeString(shape_), " to ",
           ShapeString(shape));
    shape_ = std::move(shape);
  }
  void SetZero() { std::fill(data_.begin(), data_.end(), Real(0)); }
  bool AllFinite() const {
    for (Real v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  template <typename Other>
  Tensor<Other> Cast() const {
    Tensor<Other> out(shape_);
    std::copy(data_.begin(), data_.end(), out.data());
    return out;
  }

  bool operator==(const Tensor &other) const = default;

 private:
  Shape shape_;
  // Aligned so vectorized reductions split the same way on every run.
  std::vector<Real, Eigen::aligned_allocator<Real>> data_;
};

/// Uniform doubles in [0, 1) from a 64-bit engine; unlike
/// std::uniform_real_distribution the mapping is fixed across standard
/// libraries.
inline double UniformUnit(std::mt19937_64 &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double UniformRange(std::mt19937_64 &rng, double lo, double hi) {
  return lo + (hi - lo) * UniformUnit(rng);
}

/// Box-Muller; deterministic given the engine state.
inline double StandardNormal(std::mt19937_64 &rng) {
  double u1 = UniformUnit(rng);
  double u2 = UniformUnit(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <typename Real>
Tensor<Real> RandomTensor(const Shape &shape, std::mt19937_64 &rng,
                          double lo = -1.0, double hi = 1.0) {
  Tensor<Real> t(shape);
  for (Real &v : t.values()) v = static_cast<Real>(UniformRange(rng, lo, hi));
  return t;
}

}  // namespace ctdvec::nn

#endif  // CTDVEC_NN_TENSOR_HPP
