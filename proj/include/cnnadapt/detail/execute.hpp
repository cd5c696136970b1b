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

#include <vector>

#include "cnnadapt/model.hpp"

namespace cnnadapt::detail {

// Shared graph walker for the float and integer engines. conv_step(layer,
// input) computes a conv layer's full output (conv, batchnorm, activation);
// every other kind is scalar-agnostic. Activations are released after their
// last consumer unless taps are requested.
template <typename Scalar, typename ConvStep>
InferenceTrace<Scalar> execute_graph(const Graph& graph, const ShapeTable& shapes, const FeatureMap<Scalar>& input,
                                     bool taps, ConvStep&& conv_step) {
  const LayerSpec& in_layer = graph.input();
  if (input.shape() != shapes.at(in_layer.id)) {
    throw ValidationError("input shape " + to_string(input.shape()) + " does not match model input " +
                          to_string(shapes.at(in_layer.id)));
  }

  const std::size_t n = graph.size();
  std::vector<std::size_t> last_use(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& src : graph[i].inputs) last_use[graph.position(src)] = i;
  }

  std::vector<std::optional<FeatureMap<Scalar>>> acts(n);
  acts[0] = input;
  InferenceTrace<Scalar> trace;
  if (taps) trace.add(in_layer.id, input);

  auto arg = [&](const LayerSpec& layer, std::size_t k) -> const FeatureMap<Scalar>& {
    const auto& slot = acts[graph.position(layer.inputs[k])];
    if (!slot) throw ValidationError("layer '" + layer.id + "' read an unset activation");
    return *slot;
  };

  for (std::size_t i = 1; i < n; ++i) {
    const LayerSpec& layer = graph[i];
    FeatureMap<Scalar> out;
    switch (layer.kind()) {
      case LayerKind::Conv:
        out = conv_step(layer, arg(layer, 0));
        break;
      case LayerKind::MaxPool: {
        const auto& a = std::get<MaxPoolAttrs>(layer.attrs);
        out = maxpool(arg(layer, 0), a.size, a.stride);
        break;
      }
      case LayerKind::Upsample:
        out = upsample_nearest(arg(layer, 0), std::get<UpsampleAttrs>(layer.attrs).factor);
        break;
      case LayerKind::Concat:
        out = concat(arg(layer, 0), arg(layer, 1));
        break;
      case LayerKind::OutputMarker:
        out = arg(layer, 0);
        break;
      case LayerKind::Input:
        throw ValidationError("second input layer '" + layer.id + "'");
    }
    if (out.shape() != shapes.at(layer.id)) {
      throw ValidationError("layer '" + layer.id + "' produced " + to_string(out.shape()) + ", expected " +
                            to_string(shapes.at(layer.id)));
    }
    if (taps || layer.kind() == LayerKind::OutputMarker) trace.add(layer.id, out);
    acts[i] = std::move(out);
    if (!taps) {
      for (const auto& src : layer.inputs) {
        const std::size_t p = graph.position(src);
        if (last_use[p] == i) acts[p].reset();
      }
    }
  }
  return trace;
}

}  // namespace cnnadapt::detail
