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

#include <algorithm>
#include <limits>
#include <string>

#include "cnnadapt/parallel.hpp"
#include "cnnadapt/tensor.hpp"

namespace cnnadapt {

enum class Padding { Same, Valid };

std::string to_string(Padding p);
Padding padding_from_string(const std::string& s);

/// Output length and leading pad of one spatial axis.
struct Extent {
  Index out = 0;
  Index pad_before = 0;
};

/// Same: out = ceil(in / stride), padding split with the smaller half first.
/// Valid: out = (in - kernel) / stride + 1; throws if the kernel does not fit.
Extent conv_extent(Index in, Index kernel, Index stride, Padding padding);

/// Pooling always uses the same-style extent; windows overhanging the far edge
/// only ever see real elements win.
Extent pool_extent(Index in, Index size, Index stride);

/// Raw convolution sum without bias, in accumulator type Acc.
///
/// Every output element is accumulated over (c, kh, kw) in ascending order,
/// and out-of-image taps are skipped, so the result is bit-identical for any
/// thread count. Work is split over output rows.
template <typename Acc, typename In, typename W>
FeatureMap<Acc> accumulate_conv(const FeatureMap<In>& input, const FilterBank<W>& filters, Index stride,
                                Padding padding) {
  if (input.channels() != filters.in_channels()) {
    throw ValidationError("conv input has " + std::to_string(input.channels()) + " channels, filters expect " +
                          std::to_string(filters.in_channels()));
  }
  if (stride < 1) throw ValidationError("conv stride must be positive");
  const Extent ey = conv_extent(input.height(), filters.kernel_h(), stride, padding);
  const Extent ex = conv_extent(input.width(), filters.kernel_w(), stride, padding);
  const Index nf = filters.num_filters();

  using WideWeights = Eigen::Matrix<Acc, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const WideWeights weights = filters.weights().template cast<Acc>();
  FeatureMap<Acc> out(Shape{ey.out, ex.out, nf});

  parallel_for(0, ey.out, [&](Index oy) {
    Eigen::Matrix<Acc, 1, Eigen::Dynamic> acc(nf);
    for (Index ox = 0; ox < ex.out; ++ox) {
      acc.setZero();
      for (Index c = 0; c < input.channels(); ++c) {
        for (Index kh = 0; kh < filters.kernel_h(); ++kh) {
          const Index iy = oy * stride + kh - ey.pad_before;
          if (iy < 0 || iy >= input.height()) continue;
          for (Index kw = 0; kw < filters.kernel_w(); ++kw) {
            const Index ix = ox * stride + kw - ex.pad_before;
            if (ix < 0 || ix >= input.width()) continue;
            acc.noalias() += static_cast<Acc>(input(iy, ix, c)) * weights.row(filters.tap(kh, kw, c));
          }
        }
      }
      out.pixels().row(oy * ex.out + ox) = acc.array();
    }
  });
  return out;
}

/// Float convolution: accumulate_conv plus the per-filter bias.
FloatFeatureMap conv2d(const FloatFeatureMap& input, const FilterBank<float>& filters, Index stride,
                       Padding padding);

/// gamma * (z - mu) / sqrt(sigma2 + epsilon) + beta, per channel.
FloatFeatureMap batchnorm_forward(const FloatFeatureMap& z, const BatchNormParams& params);

/// z for z > 0, alpha * z otherwise.
FloatFeatureMap leaky_relu(const FloatFeatureMap& z, float alpha);

template <typename Scalar>
FeatureMap<Scalar> maxpool(const FeatureMap<Scalar>& input, Index size, Index stride) {
  if (size < 1 || stride < 1) throw ValidationError("maxpool size and stride must be positive");
  const Extent ey = pool_extent(input.height(), size, stride);
  const Extent ex = pool_extent(input.width(), size, stride);
  FeatureMap<Scalar> out(Shape{ey.out, ex.out, input.channels()});
  parallel_for(0, ey.out, [&](Index oy) {
    for (Index ox = 0; ox < ex.out; ++ox) {
      auto dst = out.pixels().row(oy * ex.out + ox);
      dst.setConstant(std::numeric_limits<Scalar>::lowest());
      for (Index ky = 0; ky < size; ++ky) {
        const Index iy = oy * stride + ky - ey.pad_before;
        if (iy < 0 || iy >= input.height()) continue;
        for (Index kx = 0; kx < size; ++kx) {
          const Index ix = ox * stride + kx - ex.pad_before;
          if (ix < 0 || ix >= input.width()) continue;
          dst = dst.max(input.pixels().row(iy * input.width() + ix));
        }
      }
    }
  });
  return out;
}

template <typename Scalar>
FeatureMap<Scalar> upsample_nearest(const FeatureMap<Scalar>& input, Index factor) {
  if (factor < 1) throw ValidationError("upsample factor must be positive");
  FeatureMap<Scalar> out(Shape{input.height() * factor, input.width() * factor, input.channels()});
  for (Index y = 0; y < out.height(); ++y) {
    for (Index x = 0; x < out.width(); ++x) {
      out.pixels().row(y * out.width() + x) = input.pixels().row((y / factor) * input.width() + x / factor);
    }
  }
  return out;
}

/// Channel-wise concatenation, a's channels first.
template <typename Scalar>
FeatureMap<Scalar> concat(const FeatureMap<Scalar>& a, const FeatureMap<Scalar>& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ValidationError("concat spatial mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  typename FeatureMap<Scalar>::Storage joined(a.pixels().rows(), a.channels() + b.channels());
  joined << a.pixels(), b.pixels();
  return FeatureMap<Scalar>(Shape{a.height(), a.width(), a.channels() + b.channels()}, std::move(joined));
}

}  // namespace cnnadapt
