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

#include "cnnadapt/model.hpp"

#include <cmath>
#include <random>

#include "cnnadapt/detail/execute.hpp"

namespace cnnadapt {
namespace {

constexpr const char* kKindNames[] = {"input", "conv", "maxpool", "upsample", "concat", "output_marker"};

std::size_t expected_arity(LayerKind k) {
  switch (k) {
    case LayerKind::Input:
      return 0;
    case LayerKind::Concat:
      return 2;
    default:
      return 1;
  }
}

void check_positive(const LayerSpec& layer, Index v, const char* what) {
  if (v <= 0) throw ValidationError("layer '" + layer.id + "': " + what + " must be positive");
}

void check_attrs(const LayerSpec& layer) {
  std::visit(
      [&](const auto& a) {
        using A = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<A, InputAttrs>) {
          check_positive(layer, a.height, "height");
          check_positive(layer, a.width, "width");
          check_positive(layer, a.channels, "channels");
        } else if constexpr (std::is_same_v<A, ConvAttrs>) {
          check_positive(layer, a.num_filters, "num_filters");
          check_positive(layer, a.kernel_h, "kernel_h");
          check_positive(layer, a.kernel_w, "kernel_w");
          check_positive(layer, a.stride, "stride");
          if (a.activation.kind == Activation::Kind::Leaky && a.activation.p_alpha < 0) {
            throw ValidationError("layer '" + layer.id + "': p_alpha must be non-negative");
          }
          if (a.fused && a.has_batchnorm) {
            throw ValidationError("layer '" + layer.id + "' is marked fused but still has batchnorm");
          }
        } else if constexpr (std::is_same_v<A, MaxPoolAttrs>) {
          check_positive(layer, a.size, "size");
          check_positive(layer, a.stride, "stride");
        } else if constexpr (std::is_same_v<A, UpsampleAttrs>) {
          check_positive(layer, a.factor, "factor");
        }
      },
      layer.attrs);
}

}  // namespace

std::string to_string(LayerKind k) { return kKindNames[static_cast<int>(k)]; }

LayerKind layer_kind_from_string(const std::string& s) {
  for (int i = 0; i < 6; ++i) {
    if (s == kKindNames[i]) return static_cast<LayerKind>(i);
  }
  if (s == "shortcut" || s == "route" || s == "yolo" || s == "batchnorm" || s == "avgpool") {
    throw ValidationError("unsupported layer kind '" + s + "'");
  }
  throw ValidationError("unknown layer kind '" + s + "'");
}

float Activation::slope() const { return kind == Kind::Leaky ? std::ldexp(1.0f, -p_alpha) : 1.0f; }

Graph::Graph(std::vector<LayerSpec> layers) : layers_(std::move(layers)) {
  if (layers_.empty() || layers_.front().kind() != LayerKind::Input) {
    throw ValidationError("graph must start with its input layer");
  }
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& layer = layers_[i];
    if (layer.id.empty()) throw ValidationError("layer " + std::to_string(i) + " has an empty id");
    if (i > 0 && layer.kind() == LayerKind::Input) {
      throw ValidationError("graph has more than one input layer ('" + layer.id + "')");
    }
    if (layer.inputs.size() != expected_arity(layer.kind())) {
      throw ValidationError("layer '" + layer.id + "' (" + to_string(layer.kind()) + ") expects " +
                            std::to_string(expected_arity(layer.kind())) + " inputs, has " +
                            std::to_string(layer.inputs.size()));
    }
    for (const auto& src : layer.inputs) {
      if (!index_.contains(src)) {
        throw ValidationError("layer '" + layer.id + "' references '" + src +
                              "', which does not precede it in the graph");
      }
    }
    check_attrs(layer);
    if (!index_.emplace(layer.id, i).second) throw ValidationError("duplicate layer id '" + layer.id + "'");
  }
}

const LayerSpec& Graph::at(const std::string& id) const { return layers_[position(id)]; }

std::size_t Graph::position(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw ValidationError("no layer '" + id + "'");
  return it->second;
}

ConvAttrs& Graph::conv_attrs(const std::string& id) {
  if (auto* c = layers_[position(id)].conv()) return *c;
  throw ValidationError("layer '" + id + "' is not a conv");
}

const ConvAttrs& Graph::conv_attrs(const std::string& id) const {
  if (const auto* c = at(id).conv()) return *c;
  throw ValidationError("layer '" + id + "' is not a conv");
}

std::vector<std::string> Graph::conv_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : layers_) {
    if (l.kind() == LayerKind::Conv) ids.push_back(l.id);
  }
  return ids;
}

std::vector<std::string> Graph::output_ids() const {
  std::vector<std::string> ids;
  for (const auto& l : layers_) {
    if (l.kind() == LayerKind::OutputMarker) ids.push_back(l.id);
  }
  return ids;
}

ShapeTable shape_infer(const Graph& graph) {
  ShapeTable shapes;
  for (const LayerSpec& layer : graph.layers()) {
    auto in = [&](std::size_t k) { return shapes.at(layer.inputs[k]); };
    Shape out;
    switch (layer.kind()) {
      case LayerKind::Input: {
        const auto& a = std::get<InputAttrs>(layer.attrs);
        out = {a.height, a.width, a.channels};
        break;
      }
      case LayerKind::Conv: {
        const auto& a = *layer.conv();
        const Shape s = in(0);
        try {
          out = {conv_extent(s.height, a.kernel_h, a.stride, a.padding).out,
                 conv_extent(s.width, a.kernel_w, a.stride, a.padding).out, a.num_filters};
        } catch (const ValidationError& e) {
          throw ValidationError("layer '" + layer.id + "': " + e.what());
        }
        break;
      }
      case LayerKind::MaxPool: {
        const auto& a = std::get<MaxPoolAttrs>(layer.attrs);
        const Shape s = in(0);
        out = {pool_extent(s.height, a.size, a.stride).out, pool_extent(s.width, a.size, a.stride).out, s.channels};
        break;
      }
      case LayerKind::Upsample: {
        const Index f = std::get<UpsampleAttrs>(layer.attrs).factor;
        const Shape s = in(0);
        out = {s.height * f, s.width * f, s.channels};
        break;
      }
      case LayerKind::Concat: {
        const Shape a = in(0);
        const Shape b = in(1);
        if (a.height != b.height || a.width != b.width) {
          throw ValidationError("concat '" + layer.id + "' spatial mismatch: " + to_string(a) + " vs " +
                                to_string(b));
        }
        out = {a.height, a.width, a.channels + b.channels};
        break;
      }
      case LayerKind::OutputMarker:
        out = in(0);
        break;
    }
    shapes.emplace(layer.id, out);
  }
  return shapes;
}

std::vector<std::vector<ChannelOrigin>> channel_provenance(const Graph& graph) {
  std::vector<std::vector<ChannelOrigin>> prov(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const LayerSpec& layer = graph[i];
    auto fresh = [&](Index channels) {
      for (Index c = 0; c < channels; ++c) prov[i].push_back({i, c});
    };
    switch (layer.kind()) {
      case LayerKind::Input:
        fresh(std::get<InputAttrs>(layer.attrs).channels);
        break;
      case LayerKind::Conv:
        fresh(layer.conv()->num_filters);
        break;
      case LayerKind::Concat: {
        prov[i] = prov[graph.position(layer.inputs[0])];
        const auto& tail = prov[graph.position(layer.inputs[1])];
        prov[i].insert(prov[i].end(), tail.begin(), tail.end());
        break;
      }
      default:
        prov[i] = prov[graph.position(layer.inputs[0])];
    }
  }
  return prov;
}

ShapeTable Model::validate() const {
  ShapeTable shapes = shape_infer(graph);
  std::size_t convs = 0;
  for (const LayerSpec& layer : graph.layers()) {
    const ConvAttrs* a = layer.conv();
    if (!a) continue;
    ++convs;
    const auto it = params.find(layer.id);
    if (it == params.end()) throw ValidationError("conv '" + layer.id + "' has no parameters");
    const FilterBank<float>& f = it->second.filters;
    const Index c_in = shapes.at(layer.inputs[0]).channels;
    if (f.kernel_h() != a->kernel_h || f.kernel_w() != a->kernel_w || f.num_filters() != a->num_filters) {
      throw ValidationError("conv '" + layer.id + "' filter bank does not match its attributes");
    }
    if (f.in_channels() != c_in) {
      throw ValidationError("conv '" + layer.id + "' filters expect " + std::to_string(f.in_channels()) +
                            " input channels, inferred " + std::to_string(c_in));
    }
    if (a->has_batchnorm != it->second.batchnorm.has_value()) {
      throw ValidationError("conv '" + layer.id + "': has_batchnorm flag disagrees with stored parameters");
    }
    if (it->second.batchnorm) {
      it->second.batchnorm->validate();
      if (it->second.batchnorm->size() != a->num_filters) {
        throw ValidationError("conv '" + layer.id + "': batchnorm length differs from num_filters");
      }
    }
  }
  if (params.size() != convs) throw ValidationError("parameters stored for a non-conv or unknown layer");
  return shapes;
}

bool Model::has_batchnorm() const {
  for (const auto& [id, p] : params) {
    if (p.batchnorm) return true;
  }
  return false;
}

InferenceTrace<float> float_infer(const Model& model, const FloatFeatureMap& input, bool taps) {
  const ShapeTable shapes = model.validate();
  return detail::execute_graph(model.graph, shapes, input, taps, [&](const LayerSpec& layer, const FloatFeatureMap& x) {
    const ConvAttrs& a = *layer.conv();
    const ConvParams& p = model.params.at(layer.id);
    FloatFeatureMap z = conv2d(x, p.filters, a.stride, a.padding);
    if (p.batchnorm) z = batchnorm_forward(z, *p.batchnorm);
    if (a.activation.kind == Activation::Kind::Leaky) z = leaky_relu(z, a.activation.slope());
    if (!z.pixels().allFinite()) throw NumericError("non-finite activation in layer '" + layer.id + "'");
    return z;
  });
}

Model build_tinyyolov3(int num_classes, int p_alpha) {
  if (num_classes < 1) throw ValidationError("num_classes must be at least 1");
  const Index head = 3 * (static_cast<Index>(num_classes) + 5);
  std::vector<LayerSpec> layers;
  layers.push_back({"input", {}, InputAttrs{416, 416, 3}});

  auto conv = [&](const std::string& id, const std::string& src, Index filters, Index k) {
    ConvAttrs a;
    a.num_filters = filters;
    a.kernel_h = a.kernel_w = k;
    a.has_batchnorm = true;
    a.activation = Activation::leaky(p_alpha);
    layers.push_back({id, {src}, a});
  };
  auto detection_head = [&](const std::string& id, const std::string& src) {
    ConvAttrs a;
    a.num_filters = head;
    a.kernel_h = a.kernel_w = 1;
    a.has_bias = true;
    a.no_prune = true;
    layers.push_back({id, {src}, a});
  };
  auto pool = [&](const std::string& id, const std::string& src, Index stride) {
    layers.push_back({id, {src}, MaxPoolAttrs{2, stride}});
  };

  conv("conv1", "input", 16, 3);
  pool("pool1", "conv1", 2);
  conv("conv2", "pool1", 32, 3);
  pool("pool2", "conv2", 2);
  conv("conv3", "pool2", 64, 3);
  pool("pool3", "conv3", 2);
  conv("conv4", "pool3", 128, 3);
  pool("pool4", "conv4", 2);
  conv("conv5", "pool4", 256, 3);
  pool("pool5", "conv5", 2);
  conv("conv6", "pool5", 512, 3);
  pool("pool6", "conv6", 1);
  conv("conv7", "pool6", 1024, 3);
  conv("conv8", "conv7", 256, 1);
  conv("conv9", "conv8", 512, 3);
  detection_head("conv10", "conv9");
  layers.push_back({"output1", {"conv10"}, OutputAttrs{}});
  conv("conv11", "conv8", 128, 1);
  layers.push_back({"upsample1", {"conv11"}, UpsampleAttrs{2}});
  layers.push_back({"concat1", {"upsample1", "conv5"}, ConcatAttrs{}});
  conv("conv12", "concat1", 256, 3);
  detection_head("conv13", "conv12");
  layers.push_back({"output2", {"conv13"}, OutputAttrs{}});

  Model model{Graph(std::move(layers)), {}};
  const ShapeTable shapes = shape_infer(model.graph);
  for (const LayerSpec& layer : model.graph.layers()) {
    const ConvAttrs* a = layer.conv();
    if (!a) continue;
    ConvParams p{FilterBank<float>(a->kernel_h, a->kernel_w, shapes.at(layer.inputs[0]).channels, a->num_filters),
                 std::nullopt};
    if (a->has_batchnorm) p.batchnorm = BatchNormParams(a->num_filters);
    model.params.emplace(layer.id, std::move(p));
  }
  return model;
}

Model randomized(const Model& model, std::uint64_t seed, const RandomInit& init) {
  Model out = model;
  std::mt19937_64 rng(seed);
  auto uniform = [&](float lo, float hi) { return std::uniform_real_distribution<float>(lo, hi)(rng); };
  for (const std::string& id : out.graph.conv_ids()) {
    ConvParams& p = out.params.at(id);
    const float bound = init.weight_bound / std::sqrt(static_cast<float>(p.filters.taps()));
    for (Index i = 0; i < p.filters.weights().size(); ++i) p.filters.weights().data()[i] = uniform(-bound, bound);
    if (out.graph.conv_attrs(id).has_bias) {
      for (Index n = 0; n < p.filters.num_filters(); ++n) p.filters.biases()[n] = uniform(-init.bias_bound, init.bias_bound);
    }
    if (p.batchnorm) {
      BatchNormParams& bn = *p.batchnorm;
      for (Index n = 0; n < bn.size(); ++n) {
        bn.mu[n] = uniform(-0.5f, 0.5f);
        bn.sigma2[n] = uniform(init.sigma2_min, init.sigma2_max);
        bn.gamma[n] = uniform(0.5f, 1.5f);
        bn.beta[n] = uniform(-0.5f, 0.5f);
      }
    }
  }
  return out;
}

}  // namespace cnnadapt
