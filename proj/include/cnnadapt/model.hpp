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

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "cnnadapt/ops.hpp"
#include "cnnadapt/tensor.hpp"

namespace cnnadapt {

enum class LayerKind { Input, Conv, MaxPool, Upsample, Concat, OutputMarker };

std::string to_string(LayerKind k);
LayerKind layer_kind_from_string(const std::string& s);

/// Conv activation. The leaky slope is always a negative power of two,
/// 2^-p_alpha, so the integer engine can apply it as a right shift.
struct Activation {
  enum class Kind { Linear, Leaky };
  Kind kind = Kind::Linear;
  int p_alpha = 0;

  static Activation linear() { return {}; }
  static Activation leaky(int p_alpha) { return {Kind::Leaky, p_alpha}; }
  float slope() const;

  friend bool operator==(const Activation&, const Activation&) = default;
};

struct InputAttrs {
  Index height = 0;
  Index width = 0;
  Index channels = 0;
  friend bool operator==(const InputAttrs&, const InputAttrs&) = default;
};

struct ConvAttrs {
  Index num_filters = 0;
  Index kernel_h = 0;
  Index kernel_w = 0;
  Index stride = 1;
  Padding padding = Padding::Same;
  bool has_bias = false;
  bool has_batchnorm = false;
  bool fused = false;     // batchnorm already folded into the weights
  bool no_prune = false;  // pruning keeps every filter (detection heads)
  Activation activation;
  friend bool operator==(const ConvAttrs&, const ConvAttrs&) = default;
};

struct MaxPoolAttrs {
  Index size = 2;
  Index stride = 2;
  friend bool operator==(const MaxPoolAttrs&, const MaxPoolAttrs&) = default;
};

struct UpsampleAttrs {
  Index factor = 2;
  friend bool operator==(const UpsampleAttrs&, const UpsampleAttrs&) = default;
};

struct ConcatAttrs {
  friend bool operator==(const ConcatAttrs&, const ConcatAttrs&) = default;
};

struct OutputAttrs {
  friend bool operator==(const OutputAttrs&, const OutputAttrs&) = default;
};

using LayerAttrs = std::variant<InputAttrs, ConvAttrs, MaxPoolAttrs, UpsampleAttrs, ConcatAttrs, OutputAttrs>;

struct LayerSpec {
  std::string id;
  std::vector<std::string> inputs;
  LayerAttrs attrs;

  LayerKind kind() const { return static_cast<LayerKind>(attrs.index()); }
  const ConvAttrs* conv() const { return std::get_if<ConvAttrs>(&attrs); }
  ConvAttrs* conv() { return std::get_if<ConvAttrs>(&attrs); }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Topologically ordered layer DAG with exactly one input layer, stored first.
class Graph {
 public:
  Graph() = default;
  /// Throws ValidationError on duplicate ids, dangling or forward references,
  /// wrong input arity, non-positive attributes or a missing/extra input layer.
  explicit Graph(std::vector<LayerSpec> layers);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }
  const LayerSpec& operator[](std::size_t i) const { return layers_[i]; }

  const LayerSpec& at(const std::string& id) const;
  std::size_t position(const std::string& id) const;
  bool contains(const std::string& id) const { return index_.contains(id); }
  const LayerSpec& input() const { return layers_.front(); }

  /// Attributes of a conv layer, mutable; topology stays fixed.
  ConvAttrs& conv_attrs(const std::string& id);
  const ConvAttrs& conv_attrs(const std::string& id) const;

  std::vector<std::string> conv_ids() const;
  std::vector<std::string> output_ids() const;

  friend bool operator==(const Graph& a, const Graph& b) { return a.layers_ == b.layers_; }

 private:
  std::vector<LayerSpec> layers_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ShapeTable = std::map<std::string, Shape>;

/// Static output shape of every layer; fails on any inconsistency.
ShapeTable shape_infer(const Graph& graph);

/// Where an output channel of some layer comes from: channel `channel` of the
/// layer at graph position `layer` (a conv or the input).
struct ChannelOrigin {
  std::size_t layer = 0;
  Index channel = 0;
  friend bool operator==(const ChannelOrigin&, const ChannelOrigin&) = default;
};

/// Per-layer channel provenance. Pass-through layers forward their input's
/// list, concat joins both lists, conv and input start fresh ones.
std::vector<std::vector<ChannelOrigin>> channel_provenance(const Graph& graph);

struct ConvParams {
  FilterBank<float> filters;
  std::optional<BatchNormParams> batchnorm;
  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

/// Float model: layer graph plus per-conv parameters.
struct Model {
  Graph graph;
  std::map<std::string, ConvParams> params;

  /// Graph shapes plus every conv invariant: filter dims match the attributes
  /// and inferred input depth; has_batchnorm iff batchnorm params exist; a
  /// conv marked fused carries no batchnorm.
  ShapeTable validate() const;

  bool has_batchnorm() const;
  friend bool operator==(const Model&, const Model&) = default;
};

inline ShapeTable shape_infer(const Model& model) { return model.validate(); }

/// Ordered layer id -> activation map, in execution order.
template <typename Scalar>
class InferenceTrace {
 public:
  using Entry = std::pair<std::string, FeatureMap<Scalar>>;

  void add(std::string id, FeatureMap<Scalar> map) { entries_.emplace_back(std::move(id), std::move(map)); }

  const FeatureMap<Scalar>* find(const std::string& id) const {
    for (const auto& e : entries_) {
      if (e.first == id) return &e.second;
    }
    return nullptr;
  }

  const FeatureMap<Scalar>& at(const std::string& id) const {
    if (const auto* m = find(id)) return *m;
    throw ValidationError("trace has no layer '" + id + "'");
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  friend bool operator==(const InferenceTrace&, const InferenceTrace&) = default;

 private:
  std::vector<Entry> entries_;
};

/// conv -> batchnorm (if present) -> activation per conv layer, in topological
/// order. With taps every layer's output is recorded (input included),
/// otherwise only output markers.
InferenceTrace<float> float_infer(const Model& model, const FloatFeatureMap& input, bool taps = false);

/// Standard TinyYOLOv3 at 416x416x3 with zero-initialized weights and
/// identity batchnorm statistics. Convs are numbered conv1..conv13 in
/// manifest order; conv10 and conv13 are the detection heads.
Model build_tinyyolov3(int num_classes = 80, int p_alpha = 4);

/// Uniform random parameters for tests and demos: weights in
/// +-weight_bound/sqrt(fan_in), biases in +-0.1, batchnorm sigma2 in [0.1, 4].
struct RandomInit {
  float weight_bound = 1.0f;
  float bias_bound = 0.1f;
  float sigma2_min = 0.1f;
  float sigma2_max = 4.0f;
};
Model randomized(const Model& model, std::uint64_t seed, const RandomInit& init = {});

}  // namespace cnnadapt
