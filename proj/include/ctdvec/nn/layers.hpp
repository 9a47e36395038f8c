// ctdvec/nn/layers.hpp
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

// The fixed set of layer kinds the CT-DNN is built from, each with an
// analytic backward pass.
//
// Layout conventions:
//   sequence tensors  [B, T, D]   (or [T, D], treated as B = 1)
//   feature maps      [B, C, H, W] (or [C, H, W]); H is time, W frequency.
//
// Every layer offers Apply() (const, no cache; safe to call concurrently on
// a shared instance) and Forward()/Backward() for training.  Backward()
// accumulates into the layer's parameter gradients and returns the gradient
// with respect to the input of the last Forward().

#ifndef CTDVEC_NN_LAYERS_HPP
#define CTDVEC_NN_LAYERS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ctdvec/base.hpp"
#include "ctdvec/nn/tensor.hpp"

namespace ctdvec::nn {

enum class LayerKind {
  kSplice,
  kConv2D,
  kMaxPool2D,
  kRelu,
  kFlattenFrames,
  kAffine,
  kTimeDelayAffine,
  kPNorm,
  kSoftmax,
};

inline const char *LayerKindName(LayerKind kind) {
  switch (kind) {
    case LayerKind::kSplice: return "Splice";
    case LayerKind::kConv2D: return "Conv2D";
    case LayerKind::kMaxPool2D: return "MaxPool2D";
    case LayerKind::kRelu: return "Relu";
    case LayerKind::kFlattenFrames: return "FlattenFrames";
    case LayerKind::kAffine: return "Affine";
    case LayerKind::kTimeDelayAffine: return "TimeDelayAffine";
    case LayerKind::kPNorm: return "PNorm";
    case LayerKind::kSoftmax: return "Softmax";
  }
  return "?";
}

template <typename Real>
struct ParamRef {
  std::string name;
  Tensor<Real> *value;
  Tensor<Real> *grad;
};

template <typename Real>
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;

  virtual LayerKind kind() const = 0;
  const std::string &name() const { return name_; }

  virtual Tensor<Real> Apply(const Tensor<Real> &x) const = 0;
  virtual Tensor<Real> Forward(const Tensor<Real> &x) = 0;
  virtual Tensor<Real> Backward(const Tensor<Real> &grad_out) = 0;
  virtual bool HasCache() const = 0;
  virtual void ClearCache() = 0;
  virtual std::unique_ptr<Layer> Clone() const = 0;

  virtual std::vector<ParamRef<Real>> Params() { return {}; }
  /// Hash of the piecewise-linear regime (ReLU signs, pooling argmaxes, ...)
  /// selected by the last Forward(); gradient checks use it to discard
  /// finite differences that straddle a kink.
  virtual std::uint64_t RegimeSignature() const { return 0; }
  virtual void InitParams(std::mt19937_64 & /*rng*/) {}

  void ZeroGrad() {
    for (auto &p : Params()) p.grad->SetZero();
  }
  std::size_t NumParams() {
    std::size_t n = 0;
    for (auto &p : Params()) n += static_cast<std::size_t>(p.value->size());
    return n;
  }

 protected:
  [[noreturn]] void MissingCache() const {
    Fail(ErrorCode::kUsage, name_, " (", LayerKindName(kind()),
         "): Backward() called without a cached Forward()");
  }

 private:
  std::string name_;
};

namespace detail {

inline std::uint64_t MixSignature(std::uint64_t h, std::uint64_t v) {
  return SplitMix64(h ^ (v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2)));
}

/// Normalizes [T, D] / [C, H, W] style inputs to a leading batch dim.
inline Shape WithBatch(const Shape &s, std::size_t rank) {
  if (s.size() == rank) return s;
  if (s.size() + 1 == rank) {
    Shape out{1};
    out.insert(out.end(), s.begin(), s.end());
    return out;
  }
  Fail(ErrorCode::kShape, "expected rank ", rank - 1, " or ", rank,
       " input, got ", ShapeString(s));
}

inline Shape DropBatchIf(bool drop, Shape s) {
  if (drop) s.erase(s.begin());
  return s;
}

template <typename Real>
void GlorotUniform(Tensor<Real> &w, double fan_in, double fan_out,
                   std::mt19937_64 &rng) {
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (Real &v : w.values()) v = static_cast<Real>(UniformRange(rng, -bound, bound));
}

}  // namespace detail

// ---------------------------------------------------------------------------
/// Valid splicing of neighbouring frames into channels:
/// [B, T, F] -> [B, left+right+1, T-left-right, F]; channel c at output time
/// t holds input frame t + c.
template <typename Real>
class Splice final : public Layer<Real> {
 public:
  Splice(std::string name, int left, int right)
      : Layer<Real>(std::move(name)), left_(left), right_(right) {
    if (left < 0 || right < 0) Fail(ErrorCode::kConfig, "splice context must be >= 0");
  }
  LayerKind kind() const override { return LayerKind::kSplice; }
  int left() const { return left_; }
  int right() const { return right_; }
  int width() const { return left_ + right_ + 1; }

  Tensor<Real> Apply(const Tensor<Real> &x) const override {
    const Shape s = detail::WithBatch(x.shape(), 3);
    const Eigen::Index B = s[0], T = s[1], F = s[2];
    const Eigen::Index out_t = std::max<Eigen::Index>(0, T - left_ - right_);
    Tensor<Real> y(detail::DropBatchIf(x.rank() == 2, {B, width(), out_t, F}));
    for (Eigen::Index b = 0; b < B; ++b)
      for (int c = 0; c < width(); ++c)
        for (Eigen::Index t = 0; t < out_t; ++t)
          std::copy_n(x.data() + (b * T + t + c) * F, F,
                      y.data() + ((b * width() + c) * out_t + t) * F);
    return y;
  }
  Tensor<Real> Forward(const Tensor<Real> &x) override {
    in_shape_ = x.shape();
    return Apply(x);
  }
  Tensor<Real> Backward(const Tensor<Real> &g) override {
    if (!in_shape_) this->MissingCache();
    const Shape s = detail::WithBatch(*in_shape_, 3);
    const Eigen::Index B = s[0], T = s[1], F = s[2];
    const Eigen::Index out_t = std::max<Eigen::Index>(0, T - left_ - right_);
    Tensor<Real> dx(*in_shape_);
    for (Eigen::Index b = 0; b < B; ++b)
      for (int c = 0; c < width(); ++c)
        for (Eigen::Index t = 0; t < out_t; ++t) {
          const Real *src = g.data() + ((b * width() + c) * out_t + t) * F;
          Real *dst = dx.data() + (b * T + t + c) * F;
          for (Eigen::Index f = 0; f < F; ++f) dst[f] += src[f];
        }
    return dx;
  }
  bool HasCache() const override { return in_shape_.has_value(); }
  void ClearCache() override { in_shape_.reset(); }
  std::unique_ptr<Layer<Real>> Clone() const override {
    return std::make_unique<Splice>(*this);
  }

 private:
  int left_, right_;
  std::optional<Shape> in_shape_;
};

// ---------------------------------------------------------------------------
/// Valid 2-D convolution, stride 1:
///   y[o,i,j] = b[o] + sum_{c,u,v} k[o,c,u,v] * x[c,i+u,j+v].
template <typename Real>
class Conv2D final : public Layer<Real> {
 public:
  Conv2D(std::string name, Eigen::Index in_channels, Eigen::Index out_channels,
         Eigen::Index kernel_h, Eigen::Index kernel_w)
      : Layer<Real>(std::move(name)),
        cin_(in_channels), cout_(out_channels), kh_(kernel_h), kw_(kernel_w),
        weight_({out_channels, in_channels, kernel_h, kernel_w}),
        bias_({out_channels}),
        weight_grad_(weight_.shape()),
        bias_grad_(bias_.shape()) {
    if (cin_ < 1 || cout_ < 1 || kh_ < 1 || kw_ < 1)
      Fail(ErrorCode::kConfig, this->name(), ": conv dimensions must be positive");
  }
  LayerKind kind() const override { return LayerKind::kConv2D; }

  Eigen::Index in_channels() const { return cin_; }
  Eigen::Index out_channels() const { return cout_; }
  Eigen::Index kernel_h() const { return kh_; }
  Eigen::Index kernel_w() const { return kw_; }
  Tensor<Real> &weight() { return weight_; }
  Tensor<Real> &bias() { return bias_; }
  const Tensor<Real> &weight() const { return weight_; }
  const Tensor<Real> &bias() const { return bias_; }

  Tensor<Real> Apply(const Tensor<Real> &x) const override {
    MatrixR<Real> col;
    return Compute(x, col);
  }
  Tensor<Real> Forward(const Tensor<Real> &x) override {
    cache_.emplace();
    cache_->in_shape = x.shape();
    return Compute(x, cache_->col);
  }
  Tensor<Real> Backward(const Tensor<Real> &g) override {
    if (!cache_) this->MissingCache();
    const Shape s = detail::WithBatch(cache_->in_shape, 4);
    const Eigen::Index B = s[0], H = s[2], W = s[3];
    const Eigen::Index Ho = H - kh_ + 1, Wo = W - kw_ + 1, plane = Ho * Wo;
    MatrixR<Real> dy(cout_, B * plane);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index o = 0; o < cout_; ++o)
        std::copy_n(g.data() + (b * cout_ + o) * plane, plane,
                    dy.data() + o * B * plane + b * plane);
    auto wmat = weight_.Matrix(cout_, cin_ * kh_ * kw_);
    weight_grad_.Matrix(cout_, cin_ * kh_ * kw_).noalias() +=
        dy * cache_->col.transpose();
    bias_grad_.Flat() += dy.rowwise().sum();
    MatrixR<Real> dcol = wmat.transpose() * dy;
    Tensor<Real> dx(cache_->in_shape);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index c = 0; c < cin_; ++c)
        for (Eigen::Index u = 0; u < kh_; ++u)
          for (Eigen::Index v = 0; v < kw_; ++v) {
            const Real *src = dcol.data() + ((c * kh_ + u) * kw_ + v) * B * plane + b * plane;
            Real *base = dx.data() + (b * cin_ + c) * H * W;
            for (Eigen::Index i = 0; i < Ho; ++i) {
              Real *dst = base + (i + u) * W + v;
              const Real *row = src + i * Wo;
              for (Eigen::Index j = 0; j < Wo; ++j) dst[j] += row[j];
            }
          }
    return dx;
  }
  bool HasCache() const override { return cache_.has_value(); }
  void ClearCache() override { cache_.reset(); }
  std::unique_ptr<Layer<Real>> Clone() const override {
    return std::make_unique<Conv2D>(*this);
  }
  std::vector<ParamRef<Real>> Params() override {
    return {{this->name() + ".weight", &weight_, &weight_grad_},
            {this->name() + ".bias", &bias_, &bias_grad_}};
  }
  void InitParams(std::mt19937_64 &rng) override {
    detail::GlorotUniform(weight_, double(cin_ * kh_ * kw_), double(cout_ * kh_ * kw_), rng);
    bias_.SetZero();
  }

 private:
  Tensor<Real> Compute(const Tensor<Real> &x, MatrixR<Real> &col) const {
    const Shape s = detail::WithBatch(x.shape(), 4);
    const Eigen::Index B = s[0], C = s[1], H = s[2], W = s[3];
    if (C != cin_)
      Fail(ErrorCode::kShape, this->name(), ": input has ", C, " channels, expected ", cin_);
    if (kh_ > H || kw_ > W)
      Fail(ErrorCode::kShape, this->name(), ": kernel ", kh_, "x", kw_,
           " larger than input ", H, "x", W);
    const Eigen::Index Ho = H - kh_ + 1, Wo = W - kw_ + 1, plane = Ho * Wo;
    // im2col: row (c,u,v), column (b,i,j).
    col.resize(cin_ * kh_ * kw_, B * plane);
    for (Eigen::Index c = 0; c < cin_; ++c)
      for (Eigen::Index u = 0; u < kh_; ++u)
        for (Eigen::Index v = 0; v < kw_; ++v) {
          Real *dst_row = col.data() + ((c * kh_ + u) * kw_ + v) * B * plane;
          for (Eigen::Index b = 0; b < B; ++b) {
            const Real *base = x.data() + (b * cin_ + c) * H * W;
            for (Eigen::Index i = 0; i < Ho; ++i)
              std::copy_n(base + (i + u) * W + v, Wo, dst_row + b * plane + i * Wo);
          }
        }
    MatrixR<Real> y = weight_.Matrix(cout_, cin_ * kh_ * kw_) * col;
    y.colwise() += bias_.Flat();
    Tensor<Real> out(detail::DropBatchIf(x.rank() == 3, {B, cout_, Ho, Wo}));
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index o = 0; o < cout_; ++o)
        std::copy_n(y.data() + o * B * plane + b * plane, plane,
                    out.data() + (b * cout_ + o) * plane);
    return out;
  }

  struct Cache {
    Shape in_shape;
    MatrixR<Real> col;
  };
  Eigen::Index cin_, cout_, kh_, kw_;
  Tensor<Real> weight_, bias_, weight_grad_, bias_grad_;
  std::optional<Cache> cache_;
};

// ---------------------------------------------------------------------------
/// Max pooling over (time, frequency) windows of each channel.  Trailing
/// rows/columns that do not fill a window are dropped.
template <typename Real>
class MaxPool2D final : public Layer<Real> {
 public:
  MaxPool2D(std::string name, Eigen::Index pool_h, Eigen::Index pool_w,
            Eigen::Index stride_h, Eigen::Index stride_w)
      : Layer<Real>(std::move(name)), ph_(pool_h), pw_(pool_w), sh_(stride_h), sw_(stride_w) {
    if (ph_ < 1 || pw_ < 1 || sh_ < 1 || sw_ < 1)
      Fail(ErrorCode::kConfig, this->name(), ": pool sizes and strides must be positive");
  }
  LayerKind kind() const override { return LayerKind::kMaxPool2D; }
  Eigen::Index pool_h() const { return ph_; }
  Eigen::Index pool_w() const { return pw_; }

  Tensor<Real> Apply(const Tensor<Real> &x) const override {
    std::vector<Eigen::Index> argmax;
    return Compute(x, argmax);
  }
  Tensor<Real> Forward(const Tensor<Real> &x) override {
    cache_.emplace();
    cache_->in_shape = x.shape();
    return Compute(x, cache_->argmax);
  }
  Tensor<Real> Backward(const Tensor<Real> &g) override {
    if (!cache_) this->MissingCache();
    Tensor<Real> dx(cache_->in_shape);
    for (Eigen::Index i = 0; i < g.size(); ++i) dx[cache_->argmax[i]] += g[i];
    return dx;
  }
  bool HasCache() const override { return cache_.has_value(); }
  void ClearCache() override { cache_.reset(); }
  std::unique_ptr<Layer<Real>> Clone() const override {
    return std::make_unique<MaxPool2D>(*this);
  }
  std::uint64_t RegimeSignature() const override {
    std::uint64_t h = 0;
    if (cache_)
      for (auto a : cache_->argmax) h = detail::MixSignature(h, static_cast<std::uint64_t>(a));
    return h;
  }

 private:
  Tensor<Real> Compute(const Tensor<Real> &x, std::vector<Eigen::Index> &argmax) const {
    const Shape s = detail::WithBatch(x.shape(), 4);
    const Eigen::Index B = s[0], C = s[1], H = s[2], W = s[3];
    if (ph_ > H || pw_ > W)
      Fail(ErrorCode::kShape, this->name(), ": pool ", ph_, "x", pw_,
           " larger than input ", H, "x", W);
    const Eigen::Index Ho = (H - ph_) / sh_ + 1, Wo = (W - pw_) / sw_ + 1;
    Tensor<Real> y(detail::DropBatchIf(x.rank() == 3, {B, C, Ho, Wo}));
    argmax.resize(static_cast<std::size_t>(y.size()));
    Eigen::Index out = 0;
    for (Eigen::Index bc = 0; bc < B * C; ++bc) {
      const Eigen::Index base = bc * H * W;
      for (Eigen::Index i = 0; i < Ho; ++i)
        for (Eigen::Index j = 0; j < Wo; ++j, ++out) {
          Eigen::Index best = base + i * sh_ * W + j * sw_;
          for (Eigen::Index u = 0; u < ph_; ++u)
            for (Eigen::Index v = 0; v < pw_; ++v) {
              Eigen::Index idx = base + (i * sh_ + u) * W + j * sw_ + v;
              if (x[idx] > x[best]) best = idx;
            }
          y[out] = x[best];
          argmax[out] = best;
        }
    }
    return y;
  }

  struct Cache {
    Shape in_shape;
    std::vector<Eigen::Index> argmax;
  };
  Eigen::Index ph_, pw_, sh_, sw_;
  std::optional<Cache> cache_;
};

// ---------------------------------------------------------------------------
template <typename Real>
class Relu final : public Layer<Real> {
 public:
  explicit Relu(std::string name) : Layer<Real>(std::move(name)) {}
  LayerKind kind() const override { return LayerKind::kRelu; }
  Tensor<Real> Apply(const Tensor<Real> &x) const override {
    Tensor<Real> y = x;
    for (Real &v : y.values()) v = v > Real(0) ? v : Real(0);
    return y;
  }
  Tensor<Real> Forward(const Tensor<Real> &x) override {
    output_ = Apply(x);
    return *output_;
  }
  Tensor<Real> Backward(const Tensor<Real> &g) override {
    if (!output_) this->MissingCache();
    Tensor<Real> dx = g;
    for (Eigen::Index i = 0; i < dx.size(); ++i)
      if (!((*output_)[i] > Real(0))) dx[i] = Real(0);
    return dx;
  }
  bool HasCache() const override { return output_.has_value(); }
  void ClearCache() override { output_.reset(); }
  std::unique_ptr<Layer<Real>> Clone() const override { return std::make_unique<Relu>(*this); }
  std::uint64_t RegimeSignature() const override {
    std::uint64_t h = 0, word = 0;
    if (!output_) return h;
    for (Eigen::Index i = 0; i < output_->size(); ++i) {
      word = (word << 1) | ((*output_)[i] > Real(0) ? 1u : 0u);
      if (i % 64 == 63) h = detail::MixSignature(h, word), word = 0;
    }
    return detail::MixSignature(h, word);
  }

 private:
  std::optional<Tensor<Real>> output_;
};

// ---------------------------------------------------------------------------
/// [B, C, H, W] -> [B, H, C*W]: one flat vector per frame, channel-major.
template <typename Real>
class FlattenFrames final : public Layer<Real> {
 public:
  explicit FlattenFrames(std::string name) : Layer<Real>(std::move(name)) {}
  LayerKind kind() const override { return LayerKind::kFlattenFrames; }
  Tensor<Real> Apply(const Tensor<Real> &x) const override {
    const Shape s = detail::WithBatch(x.shape(), 4);
    const Eigen::Index B = s[0], C = s[1], H = s[2], W = s[3];
    Tensor<Real> y(detail::DropBatchIf(x.rank() == 3, {B, H, C * W}));
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index c = 0; c < C; ++c)
        for (Eigen::Index h = 0; h < H; ++h)
          std::copy_n(x.data() + ((b * C + c) * H + h) * W, W,
                      y.data() + (b * H + h) * C * W + c * W);
    return y;
  }
  Tensor<Real> Forward(const Tensor<Real> &x) override {
    in_shape_ = x.shape();
    return Apply(x);
  }
  Tensor<Real> Backward(const Tensor<Real> &g) override {
    if (!in_shape_) this->MissingCache();
    const Shape s = detail::WithBatch(*in_shape_, 4);
    const Eigen::Index B = s[0], C = s[1], H = s[2], W = s[3];
    Tensor<Real> dx(*in_shape_);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index c = 0; c < C; ++c)
        for (Eigen::Index h = 0; h < H; ++h)
          std::copy_n(g.data() + (b * H + h) * C * W + c * W, W,
                      dx.data() + ((b * C + c) * H + h) * W);
    return dx;
  }
  bool HasCache() const override { return in_shape_.has_value(); }
  void ClearCache() override { in_shape_.reset(); }
  std::unique_ptr<Layer<Real>> Clone() const override {
    return std::make_unique<FlattenFrames>(*this);
  }

 private:
  std::optional<Shape> in_shape_;
};

// ---------------------------------------------------------------------------
/// y = W x + b over the last dimension.
template <typename Real>
class Affine final : public Layer<Real> {
 public:
  Affine(std::string name, Eigen::Index in_dim, Eigen::Index out_dim)
      : Layer<Real>(std::move(name)),
        weight_({out_dim, in_dim}), bias_({out_dim}),
        weight_grad_(weight_.shape()), bias_grad_(bias_.shape()) {
    if (in_dim < 1 || out_dim < 1)
      Fail(ErrorCode::kConfig, this->name(), ": affine dims must be positive");
  }
  LayerKind kind() const override { return LayerKind::kAffine; }
  Eigen::Index in_dim() const { return weight_.dim(1); }
  Eigen::Index out_dim() const { return weight_.dim(0); }
  Tensor<Real> &weight() { return weight_; }
  Tensor<Real> &bias() { return bias_; }
  const Tensor<Real> &weight() const { return weight_; }
  const Tensor<Real> &bias() const { return bias_; }

  Tensor<Real> Apply(const Tensor<Real> &x) const override {
    if (x.rank() == 0 || x.Cols() != in_dim())
      Fail(ErrorCode::kShape, this->name(), ": input ", ShapeString(x.shape()),
           " does not end in ", in_dim());
    Shape out_shape = x.shape();
    out_shape.back() = out_dim();
    Tensor<Real> y(out_shape);
    auto ym = y.Matrix();
    ym.noalias() = x.Matrix() * weight_.Matrix().transpose();
    ym.rowwise() += bias_.Flat().transpose();
    return y;
  }
  Tensor<Real> Forward(const Tensor<Real> &x) override {
    Tensor<Real> y = Apply(x);
    input_ = x;
    return y;
  }
  Tensor<Real> Backward(const Tensor<Real> &g) override {
    if (!input_) this->MissingCache();
    auto gm = g.Matrix(input_->Rows(), out_dim());
    weight_grad_.Matrix().noalias() += gm.transpose() * input_->Matrix();
    bias_grad_.Flat() += gm.colwise().sum().transpose();
    Tensor<Real> dx(input_->shape());
    dx.Matrix().noalias() = gm * weight_.Matrix();
    return dx;
  }
  bool HasCache() const override { return input_.has_value(); }
  void ClearCache() override { input_.reset(); }
  std::unique_ptr<Layer<Real>> Clone() const override { return std::make_unique<Affine>(*this); }
  std::vector<ParamRef<Real>> Params() override {
    return {{this->name() + ".weight", &weight_, &weight_grad_},
            {this->name() + ".bias", &bias_, &bias_grad_}};
  }
  void InitParams(std::mt19937_64 &rng) override {
    detail::GlorotUniform(weight_, double(in_dim()), double(out_dim()), rng);
    bias_.SetZero();
  }

 private:
  Tensor<Real> weight_, bias_, weight_grad_, bias_grad_;
  std::optional<Tensor<Real>> input_;
};

// ---------------------------------------------------------------------------
/// Affine map over a sparse set of frame offsets:
///   y[t] = W concat(x[t + o - min(offsets)] for o in offsets) + b.
/// Unpadded, so T_out = T - (max(offsets) - min(offsets)); an input too short
/// for the offsets yields an empty [B, 0, D_out] output.
template <typename Real>
class TimeDelayAffine final : public Layer<Real> {
 public:
  TimeDelayAffine(std::string name, Eigen::Index in_dim, Eigen::Index out_dim,
                  std::vector<int> offsets)
      : Layer<Real>(std::move(name)), in_dim_(in_dim), offsets_(std::move(offsets)),
        weight_({out_dim, in_dim * static_cast<Eigen::Index>(offsets_.size())}),
        bias_({out_dim}), weight_grad_(weight_.shape()), bias_grad_(bias_.shape()) {
    if (offsets_.empty()) Fail(ErrorCode::kConfig, this->name(), ": no time offsets");
    if (in_dim < 1 || out_dim < 1)
      Fail(ErrorCode::kConfig, this->name(), ": dims must be positive");
    min_ = *std::min_element(offsets_.begin(), offsets_.end());
    max_ = *std::max_element(offsets_.begin(), offsets_.end());
  }
  LayerKind kind() const override { return LayerKind::kTimeDelayAffine; }
  const std::vector<int> &offsets() const { return offsets_; }
  Eigen::Index in_dim() const { return in_dim_; }
  Eigen::Index out_dim() const { return weight_.dim(0); }
  int context() const { return max_ - min_; }
  Tensor<Real> &weight() { return weight_; }
  Tensor<Real> &bias() { return bias_; }
  const Tensor<Real> &weight() const { return weight_; }
  const Tensor<Real> &bias() const { return bias_; }

  Tensor<Real> Apply(const Tensor<Real> &x) const override {
    MatrixR<Real> cat;
    return Compute(x, cat);
  }
  Tensor<Real> Forward(const Tensor<Real> &x) override {
    cache_.emplace();
    cache_->in_shape = x.shape();
    return Compute(x, cache_->cat);
  }
  Tensor<Real> Backward(const Tensor<Real> &g) override {
    if (!cache_) this->MissingCache();
    const Shape s = detail::WithBatch(cache_->in_shape, 3);
    const Eigen::Index B = s[0], T = s[1];
    const Eigen::Index To = std::max<Eigen::Index>(0, T - context());
    Tensor<Real> dx(cache_->in_shape);
    if (To == 0) return dx;
    auto gm = g.Matrix(B * To, out_dim());
    weight_grad_.Matrix().noalias() += gm.transpose() * cache_->cat;
    bias_grad_.Flat() += gm.colwise().sum().transpose();
    MatrixR<Real> dcat = gm * weight_.Matrix();
    const Eigen::Index k = static_cast<Eigen::Index>(offsets_.size());
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < To; ++t)
        for (Eigen::Index j = 0; j < k; ++j) {
          const Real *src = dcat.data() + (b * To + t) * k * in_dim_ + j * in_dim_;
          Real *dst = dx.data() + (b * T + t + offsets_[j] - min_) * in_dim_;
          for (Eigen::Index d = 0; d < in_dim_; ++d) dst[d] += src[d];
        }
    return dx;
  }
  bool HasCache() const override { return cache_.has_value(); }
  void ClearCache() override { cache_.reset(); }
  std::unique_ptr<Layer<Real>> Clone() const override {
    return std::make_unique<TimeDelayAffine>(*this);
  }
  std::vector<ParamRef<Real>> Params() override {
    return {{this->name() + ".weight", &weight_, &weight_grad_},
            {this->name() + ".bias", &bias_, &bias_grad_}};
  }
  void InitParams(std::mt19937_64 &rng) override {
    detail::GlorotUniform(weight_, double(weight_.dim(1)), double(out_dim()), rng);
    bias_.SetZero();
  }

 private:
  Tensor<Real> Compute(const Tensor<Real> &x, MatrixR<Real> &cat) const {
    const Shape s = detail::WithBatch(x.shape(), 3);
    const Eigen::Index B = s[0], T = s[1], D = s[2];
    if (D != in_dim_)
      Fail(ErrorCode::kShape, this->name(), ": input width ", D, ", expected ", in_dim_);
    const Eigen::Index To = std::max<Eigen::Index>(0, T - context());
    Tensor<Real> y(detail::DropBatchIf(x.rank() == 2, {B, To, out_dim()}));
    const Eigen::Index k = static_cast<Eigen::Index>(offsets_.size());
    cat.resize(B * To, k * D);
    if (To == 0) return y;
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index t = 0; t < To; ++t)
        for (Eigen::Index j = 0; j < k; ++j)
          std::copy_n(x.data() + (b * T + t + offsets_[j] - min_) * D, D,
                      cat.data() + (b * To + t) * k * D + j * D);
    auto ym = y.Matrix(B * To, out_dim());
    ym.noalias() = cat * weight_.Matrix().transpose();
    ym.rowwise() += bias_.Flat().transpose();
    return y;
  }

  struct Cache {
    Shape in_shape;
    MatrixR<Real> cat;
  };
  Eigen::Index in_dim_;
  std::vector<int> offsets_;
  int min_ = 0, max_ = 0;
  Tensor<Real> weight_, bias_, weight_grad_, bias_grad_;
  std::optional<Cache> cache_;
};

// ---------------------------------------------------------------------------
/// Group p-norm over consecutive groups of the last dimension:
///   y[g] = (sum_{i in g} |x_i|^p)^(1/p).
template <typename Real>
class PNorm final : public Layer<Real> {
 public:
  PNorm(std::string name, Eigen::Index group, double p)
      : Layer<Real>(std::move(name)), group_(group), p_(p) {
    if (group < 1) Fail(ErrorCode::kConfig, this->name(), ": group size must be >= 1");
    if (!(p >= 1.0)) Fail(ErrorCode::kConfig, this->name(), ": p must be >= 1");
  }
  LayerKind kind() const override { return LayerKind::kPNorm; }
  Eigen::Index group() const { return group_; }
  double p() const { return p_; }

  Tensor<Real> Apply(const Tensor<Real> &x) const override {
    if (x.rank() == 0 || x.Cols() % group_ != 0)
      Fail(ErrorCode::kShape, this->name(), ": width ", x.Cols(),
           " not divisible by group ", group_);
    Shape out_shape = x.shape();
    out_shape.back() /= group_;
    Tensor<Real> y(out_shape);
    const bool two = p_ == 2.0;
    for (Eigen::Index g = 0; g < y.size(); ++g) {
      const Real *in = x.data() + g * group_;
      Real acc = 0;
      if (two) {
        for (Eigen::Index i = 0; i < group_; ++i) acc += in[i] * in[i];
        y[g] = std::sqrt(acc);
      } else {
        for (Eigen::Index i = 0; i < group_; ++i)
          acc += static_cast<Real>(std::pow(std::abs(in[i]), p_));
        y[g] = static_cast<Real>(std::pow(acc, 1.0 / p_));
      }
    }
    return y;
  }
  Tensor<Real> Forward(const Tensor<Real> &x) override {
    Tensor<Real> y = Apply(x);
    cache_.emplace(Cache{x, y});
    return y;
  }
  /// dy/dx_i = sign(x_i) |x_i|^(p-1) / y^(p-1); 0 where y = 0.
  Tensor<Real> Backward(const Tensor<Real> &g) override {
    if (!cache_) this->MissingCache();
    const Tensor<Real> &x = cache_->input;
    const Tensor<Real> &y = cache_->output;
    Tensor<Real> dx(x.shape());
    for (Eigen::Index j = 0; j < y.size(); ++j) {
      if (y[j] == Real(0)) continue;
      const Real scale = g[j] / static_cast<Real>(std::pow(y[j], p_ - 1.0));
      for (Eigen::Index i = 0; i < group_; ++i) {
        const Real xi = x[j * group_ + i];
        const Real mag = p_ == 2.0 ? std::abs(xi)
                                   : static_cast<Real>(std::pow(std::abs(xi), p_ - 1.0));
        dx[j * group_ + i] = (xi > 0 ? mag : xi < 0 ? -mag : Real(0)) * scale;
      }
    }
    return dx;
  }
  bool HasCache() const override { return cache_.has_value(); }
  void ClearCache() override { cache_.reset(); }
  std::unique_ptr<Layer<Real>> Clone() const override { return std::make_unique<PNorm>(*this); }
  std::uint64_t RegimeSignature() const override {
    std::uint64_t h = 0;
    if (cache_)
      for (Eigen::Index j = 0; j < cache_->output.size(); ++j)
        if (cache_->output[j] == Real(0)) h = detail::MixSignature(h, static_cast<std::uint64_t>(j));
    return h;
  }

 private:
  struct Cache {
    Tensor<Real> input, output;
  };
  Eigen::Index group_;
  double p_;
  std::optional<Cache> cache_;
};

// ---------------------------------------------------------------------------
/// Row-wise softmax over the last dimension (max-subtracted).
template <typename Real>
class Softmax final : public Layer<Real> {
 public:
  explicit Softmax(std::string name) : Layer<Real>(std::move(name)) {}
  LayerKind kind() const override { return LayerKind::kSoftmax; }
  Tensor<Real> Apply(const Tensor<Real> &x) const override {
    Tensor<Real> y = x;
    auto m = y.Matrix();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m.row(r).array() -= m.row(r).maxCoeff();
      m.row(r) = m.row(r).array().exp().matrix();
      m.row(r) /= m.row(r).sum();
    }
    return y;
  }
  Tensor<Real> Forward(const Tensor<Real> &x) override {
    output_ = Apply(x);
    return *output_;
  }
  Tensor<Real> Backward(const Tensor<Real> &g) override {
    if (!output_) this->MissingCache();
    Tensor<Real> dx(output_->shape());
    auto y = output_->Matrix();
    auto gm = g.Matrix(y.rows(), y.cols());
    auto d = dx.Matrix();
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const Real dot = y.row(r).dot(gm.row(r));
      d.row(r) = y.row(r).array() * (gm.row(r).array() - dot);
    }
    return dx;
  }
  bool HasCache() const override { return output_.has_value(); }
  void ClearCache() override { output_.reset(); }
  std::unique_ptr<Layer<Real>> Clone() const override { return std::make_unique<Softmax>(*this); }

 private:
  std::optional<Tensor<Real>> output_;
};

// ---------------------------------------------------------------------------

template <typename Real>
struct SoftmaxXentResult {
  Real loss;
  VectorR<Real> grad_logits;
};

/// loss = -log softmax(logits)[label]; grad = softmax(logits) - onehot(label).
template <typename Real, typename Derived>
SoftmaxXentResult<Real> SoftmaxXent(const Eigen::MatrixBase<Derived> &logits, Eigen::Index label) {
  const Eigen::Index k = logits.size();
  if (label < 0 || label >= k)
    Fail(ErrorCode::kIndex, "label ", label, " out of range [0, ", k, ")");
  VectorR<Real> shifted = logits.template cast<Real>();
  shifted.array() -= shifted.maxCoeff();
  VectorR<Real> e = shifted.array().exp();
  const Real sum = e.sum();
  SoftmaxXentResult<Real> out;
  out.loss = std::log(sum) - shifted(label);
  out.grad_logits = e / sum;
  out.grad_logits(label) -= Real(1);
  return out;
}

}  // namespace ctdvec::nn

#endif  // CTDVEC_NN_LAYERS_HPP
