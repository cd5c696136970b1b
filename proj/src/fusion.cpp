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

#include "cnnadapt/fusion.hpp"

#include <cmath>

namespace cnnadapt {

FilterBank<float> fuse_layer(const FilterBank<float>& filters, const BatchNormParams& bn) {
  bn.validate();
  if (bn.size() != filters.num_filters()) {
    throw ValidationError("batchnorm length " + std::to_string(bn.size()) + " differs from num_filters " +
                          std::to_string(filters.num_filters()));
  }
  const Eigen::ArrayXd scale =
      bn.gamma.cast<double>().array() / (bn.sigma2.cast<double>().array() + static_cast<double>(bn.epsilon)).sqrt();

  FilterBank<float> fused = filters;
  fused.weights() = (filters.weights().cast<double>() * scale.matrix().asDiagonal()).cast<float>();
  fused.biases() = (scale * (filters.biases().cast<double>().array() - bn.mu.cast<double>().array()) +
                    bn.beta.cast<double>().array())
                       .cast<float>()
                       .matrix();
  return fused;
}

Model fuse_model(const Model& model) {
  model.validate();
  for (const auto& id : model.graph.conv_ids()) {
    if (model.graph.conv_attrs(id).fused) {
      throw ValidationError("model is already fused (conv '" + id + "' carries the fused flag)");
    }
  }
  Model out = model;
  for (const auto& id : out.graph.conv_ids()) {
    ConvParams& p = out.params.at(id);
    if (!p.batchnorm) continue;
    p.filters = fuse_layer(p.filters, *p.batchnorm);
    p.batchnorm.reset();
    ConvAttrs& a = out.graph.conv_attrs(id);
    a.has_batchnorm = false;
    a.has_bias = true;
    a.fused = true;
  }
  return out;
}

}  // namespace cnnadapt
