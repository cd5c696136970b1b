// Copyright 2026 The cnnadapt Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <type_traits>

#include "cnnadapt/error.hpp"

namespace cnnadapt {

using Index = Eigen::Index;

/// Spatial extent and depth of a single-image activation map.
struct Shape {
  Index height = 0;
  Index width = 0;
  Index channels = 0;

  Index size() const { return height * width * channels; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Rank-3 activation tensor in (h, w, c) row-major order.
///
/// Stored as an Eigen array with one row per pixel and one column per channel,
/// so per-channel affine maps are plain rowwise broadcasts. A map may have
/// zero channels (the neutral element of concat) but never zero pixels.
template <typename Scalar>
class FeatureMap {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using value_type = Scalar;

  FeatureMap() = default;

  explicit FeatureMap(const Shape& shape)
      : shape_(checked(shape)), pixels_(Storage::Zero(shape.height * shape.width, shape.channels)) {}

  FeatureMap(const Shape& shape, Storage pixels) : shape_(checked(shape)), pixels_(std::move(pixels)) {
    if (pixels_.rows() != shape_.height * shape_.width || pixels_.cols() != shape_.channels) {
      throw ValidationError("feature map storage does not match shape " + to_string(shape_));
    }
  }

  static FeatureMap Constant(const Shape& shape, Scalar value) {
    FeatureMap m(shape);
    m.pixels_.setConstant(value);
    return m;
  }

  const Shape& shape() const { return shape_; }
  Index height() const { return shape_.height; }
  Index width() const { return shape_.width; }
  Index channels() const { return shape_.channels; }
  Index size() const { return shape_.size(); }

  Scalar operator()(Index y, Index x, Index c) const { return pixels_(y * shape_.width + x, c); }
  Scalar& operator()(Index y, Index x, Index c) { return pixels_(y * shape_.width + x, c); }

  /// (height*width) x channels view.
  const Storage& pixels() const { return pixels_; }
  Storage& pixels() { return pixels_; }

  std::span<const Scalar> values() const { return {pixels_.data(), static_cast<std::size_t>(size())}; }
  std::span<Scalar> values() { return {pixels_.data(), static_cast<std::size_t>(size())}; }

  template <typename To>
  FeatureMap<To> cast() const {
    return FeatureMap<To>(shape_, pixels_.template cast<To>());
  }

  friend bool operator==(const FeatureMap& a, const FeatureMap& b) {
    return a.shape_ == b.shape_ && (a.size() == 0 || (a.pixels_ == b.pixels_).all());
  }

 private:
  static const Shape& checked(const Shape& s) {
    if (s.height <= 0 || s.width <= 0 || s.channels < 0) {
      throw ValidationError("degenerate feature map shape " + to_string(s));
    }
    return s;
  }

  Shape shape_;
  Storage pixels_;
};

using FloatFeatureMap = FeatureMap<float>;
/// Integer activation maps; the declared bit width is the scalar's width.
using IntFeatureMap = FeatureMap<std::int16_t>;
using WideIntFeatureMap = FeatureMap<std::int32_t>;

template <typename Scalar>
constexpr int width_bits() {
  return static_cast<int>(8 * sizeof(Scalar));
}

/// Convolution filters, weights indexed (kh, kw, c_in, n).
///
/// The weight matrix has one row per kernel tap (kh, kw, c_in) and one column
/// per filter; RowMajor storage makes the in-memory order exactly the
/// serialized (kh, kw, c_in, n) order with n fastest.
template <typename Scalar>
class FilterBank {
 public:
  using Weights = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Biases = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  FilterBank() = default;

  FilterBank(Index kernel_h, Index kernel_w, Index in_channels, Index num_filters)
      : kernel_h_(kernel_h), kernel_w_(kernel_w), in_channels_(in_channels), num_filters_(num_filters) {
    check_dims();
    weights_ = Weights::Zero(taps(), num_filters);
    biases_ = Biases::Zero(num_filters);
  }

  FilterBank(Index kernel_h, Index kernel_w, Index in_channels, Index num_filters, Weights weights,
             Biases biases)
      : kernel_h_(kernel_h),
        kernel_w_(kernel_w),
        in_channels_(in_channels),
        num_filters_(num_filters),
        weights_(std::move(weights)),
        biases_(std::move(biases)) {
    check_dims();
    if (weights_.rows() != taps() || weights_.cols() != num_filters_) {
      throw ValidationError("filter weights must be (kh*kw*c_in) x num_filters");
    }
    if (biases_.size() != num_filters_) throw ValidationError("bias length must equal num_filters");
  }

  Index kernel_h() const { return kernel_h_; }
  Index kernel_w() const { return kernel_w_; }
  Index in_channels() const { return in_channels_; }
  Index num_filters() const { return num_filters_; }
  Index taps() const { return kernel_h_ * kernel_w_ * in_channels_; }

  Index tap(Index kh, Index kw, Index c) const { return (kh * kernel_w_ + kw) * in_channels_ + c; }
  Scalar weight(Index kh, Index kw, Index c, Index n) const { return weights_(tap(kh, kw, c), n); }
  Scalar& weight(Index kh, Index kw, Index c, Index n) { return weights_(tap(kh, kw, c), n); }

  const Weights& weights() const { return weights_; }
  Weights& weights() { return weights_; }
  const Biases& biases() const { return biases_; }
  Biases& biases() { return biases_; }

  auto filter(Index n) const { return weights_.col(n); }

  template <typename To>
  FilterBank<To> cast() const {
    return FilterBank<To>(kernel_h_, kernel_w_, in_channels_, num_filters_, weights_.template cast<To>(),
                          biases_.template cast<To>());
  }

  friend bool operator==(const FilterBank& a, const FilterBank& b) {
    return a.kernel_h_ == b.kernel_h_ && a.kernel_w_ == b.kernel_w_ && a.in_channels_ == b.in_channels_ &&
           a.num_filters_ == b.num_filters_ && a.weights_ == b.weights_ && a.biases_ == b.biases_;
  }

 private:
  void check_dims() const {
    if (kernel_h_ <= 0 || kernel_w_ <= 0 || in_channels_ <= 0 || num_filters_ <= 0) {
      throw ValidationError("filter bank dimensions must be positive");
    }
  }

  Index kernel_h_ = 0;
  Index kernel_w_ = 0;
  Index in_channels_ = 0;
  Index num_filters_ = 0;
  Weights weights_;
  Biases biases_;
};

/// Stored batchnorm statistics and affine terms, one entry per filter.
struct BatchNormParams {
  Eigen::VectorXf mu;
  Eigen::VectorXf sigma2;
  Eigen::VectorXf gamma;
  Eigen::VectorXf beta;
  float epsilon = 0.001f;

  explicit BatchNormParams(Index n = 0)
      : mu(Eigen::VectorXf::Zero(n)),
        sigma2(Eigen::VectorXf::Ones(n)),
        gamma(Eigen::VectorXf::Ones(n)),
        beta(Eigen::VectorXf::Zero(n)) {}

  Index size() const { return mu.size(); }

  // Throws ValidationError on ragged vectors, NumericError on sigma2 < 0 or
  // sigma2 + epsilon <= 0.
  void validate() const;

  friend bool operator==(const BatchNormParams& a, const BatchNormParams& b) {
    return a.epsilon == b.epsilon && a.mu == b.mu && a.sigma2 == b.sigma2 && a.gamma == b.gamma &&
           a.beta == b.beta;
  }
};

}  // namespace cnnadapt
