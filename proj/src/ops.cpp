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

#include "cnnadapt/ops.hpp"

#include <cmath>

namespace cnnadapt {

std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

void BatchNormParams::validate() const {
  const Index n = mu.size();
  if (sigma2.size() != n || gamma.size() != n || beta.size() != n) {
    throw ValidationError("batchnorm vectors must share one length");
  }
  for (Index i = 0; i < n; ++i) {
    if (!(sigma2[i] >= 0.0f) || !(static_cast<double>(sigma2[i]) + epsilon > 0.0)) {
      throw ValidationError("batchnorm channel " + std::to_string(i) + " has sigma2 + epsilon <= 0");
    }
  }
}

std::string to_string(Padding p) { return p == Padding::Same ? "same" : "valid"; }

Padding padding_from_string(const std::string& s) {
  if (s == "same") return Padding::Same;
  if (s == "valid") return Padding::Valid;
  throw ValidationError("unknown padding '" + s + "'");
}

Extent conv_extent(Index in, Index kernel, Index stride, Padding padding) {
  if (in <= 0 || kernel <= 0 || stride <= 0) throw ValidationError("degenerate convolution extent");
  if (padding == Padding::Valid) {
    if (kernel > in) {
      throw ValidationError("kernel " + std::to_string(kernel) + " larger than input " + std::to_string(in));
    }
    return {(in - kernel) / stride + 1, 0};
  }
  const Index out = (in + stride - 1) / stride;
  const Index total = std::max<Index>((out - 1) * stride + kernel - in, 0);
  return {out, total / 2};
}

Extent pool_extent(Index in, Index size, Index stride) { return conv_extent(in, size, stride, Padding::Same); }

FloatFeatureMap conv2d(const FloatFeatureMap& input, const FilterBank<float>& filters, Index stride,
                       Padding padding) {
  FloatFeatureMap out = accumulate_conv<float>(input, filters, stride, padding);
  out.pixels().rowwise() += filters.biases().transpose().array();
  return out;
}

FloatFeatureMap batchnorm_forward(const FloatFeatureMap& z, const BatchNormParams& params) {
  params.validate();
  if (params.size() != z.channels()) {
    throw ValidationError("batchnorm has " + std::to_string(params.size()) + " channels, input has " +
                          std::to_string(z.channels()));
  }
  const Eigen::ArrayXf denom = (params.sigma2.array() + params.epsilon).sqrt();
  FloatFeatureMap out = z;
  auto& px = out.pixels();
  px.rowwise() -= params.mu.transpose().array();
  px.rowwise() /= denom.transpose();
  px.rowwise() *= params.gamma.transpose().array();
  px.rowwise() += params.beta.transpose().array();
  return out;
}

FloatFeatureMap leaky_relu(const FloatFeatureMap& z, float alpha) {
  if (alpha < 0.0f) throw ValidationError("leaky relu slope must be non-negative");
  FloatFeatureMap out = z;
  out.pixels() = (z.pixels() > 0.0f).select(z.pixels(), alpha * z.pixels());
  return out;
}

}  // namespace cnnadapt
