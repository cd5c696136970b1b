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

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "cnnadapt/model.hpp"

namespace cnnadapt {

/// Power-of-two scaling: reals map to integers by S = 2^p; the leaky slope
/// is 2^-p_alpha. Rounding is half away from zero and every narrowing
/// saturates (and is counted) instead of wrapping.
struct QuantConfig {
  int p = 8;
  int p_alpha = 4;

  std::int32_t scale() const { return std::int32_t{1} << p; }
  void validate() const;
  friend bool operator==(const QuantConfig&, const QuantConfig&) = default;
};

/// Arithmetic right shift: floor(x / 2^p), rounding toward -infinity.
constexpr std::int64_t rshift(std::int64_t x, int p) { return x >> p; }

std::int16_t saturate_int16(std::int64_t v, std::uint64_t* saturations = nullptr);
std::int32_t saturate_int32(std::int64_t v, std::uint64_t* saturations = nullptr);

/// round(v * 2^p) half away from zero, clamped to int16. Clamps increment
/// *saturations when given.
std::int16_t quantize_value(double v, int p, std::uint64_t* saturations = nullptr);

/// Integer twin of a fused model: int16 weights and biases at scale 2^p,
/// leaky layers switched to the configured p_alpha.
struct QuantizedModel {
  Graph graph;
  std::map<std::string, FilterBank<std::int16_t>> params;
  QuantConfig config;
  std::string source_identity;
  std::uint64_t parameter_saturations = 0;

  ShapeTable validate() const;
  friend bool operator==(const QuantizedModel&, const QuantizedModel&) = default;
};

/// Throws ValidationError if the model still carries batchnorm.
QuantizedModel quantize_model(const Model& model, const QuantConfig& config);

IntFeatureMap quantize_input(const FloatFeatureMap& input, const QuantConfig& config,
                             std::uint64_t* saturations = nullptr);

/// w / 2^p per element.
FloatFeatureMap dequantize(const IntFeatureMap& map, int p);

struct LayerOverflow {
  std::uint64_t accumulator_saturations = 0;  // exact sums outside int32
  std::uint64_t int16_saturations = 0;        // shifted sums or bias adds outside int16
  friend bool operator==(const LayerOverflow&, const LayerOverflow&) = default;
};

struct OverflowStats {
  std::map<std::string, LayerOverflow> layers;
  std::uint64_t total() const;
  friend bool operator==(const OverflowStats&, const OverflowStats&) = default;
};

nlohmann::ordered_json to_json(const OverflowStats& stats);

/// Quantized convolution: int16 operands widened, the exact sum kept in
/// 64 bits and saturated to int32, then right-shifted by p, saturated to
/// int16, and finally the int16 bias added with saturation.
IntFeatureMap int_conv_forward(const IntFeatureMap& input, const FilterBank<std::int16_t>& filters, Index stride,
                               Padding padding, const QuantConfig& config, LayerOverflow* stats = nullptr);

/// z for z > 0, rshift(z, p_alpha) otherwise.
IntFeatureMap quant_leaky_relu(const IntFeatureMap& z, int p_alpha);

struct IntInference {
  InferenceTrace<std::int16_t> trace;
  OverflowStats overflow;
};

/// Runs the quantized graph with integer arithmetic only. Pooling,
/// upsampling and concatenation are the same operators as the float engine.
IntInference int_infer(const QuantizedModel& model, const IntFeatureMap& input, bool taps = false);

void save_quantized_model(const QuantizedModel& model, const std::filesystem::path& manifest_path);
QuantizedModel load_quantized_model(const std::filesystem::path& manifest_path);

/// True when the manifest at `path` carries a quantization block.
bool is_quantized_manifest(const std::filesystem::path& manifest_path);

}  // namespace cnnadapt
