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
#include <optional>
#include <string>
#include <vector>

#include "cnnadapt/model.hpp"

namespace cnnadapt {

inline constexpr int kReportVersion = 1;

/// (reference - value) / reference, in percent.
double reduction_percent(double reference, double value);

struct LayerFlops {
  std::string id;
  std::uint64_t conv = 0;
  std::uint64_t batchnorm = 0;
  std::uint64_t total() const { return conv + batchnorm; }
};

struct Comparison {
  std::string label;
  std::uint64_t reference_total = 0;
  double reduction_percent = 0.0;
};

/// Per-conv FLOP counts. A multiply-accumulate is 2 FLOPs, conv bias adds are
/// not counted separately, and batchnorm is 4 FLOPs per output element.
/// Pooling, upsampling and concatenation count as zero.
struct FlopReport {
  std::vector<LayerFlops> layers;
  std::uint64_t conv_total = 0;
  std::uint64_t batchnorm_total = 0;
  std::uint64_t total = 0;
  std::optional<Comparison> reference;
};

FlopReport count_flops(const Graph& graph);
inline FlopReport count_flops(const Model& model) {
  model.validate();
  return count_flops(model.graph);
}

struct LayerParams {
  std::string id;
  std::uint64_t weights = 0;
  std::uint64_t biases = 0;
  std::uint64_t batchnorm = 0;
  double percent = 0.0;
  double cumulative_percent = 0.0;
  std::uint64_t total() const { return weights + biases + batchnorm; }
};

/// Stored parameter counts per conv: kh*kw*c_in*nf weights, nf biases when
/// present, 4*nf batchnorm values when present. Percentages are of the model
/// total, cumulative in layer order.
struct ParamReport {
  std::vector<LayerParams> layers;
  std::uint64_t weights_total = 0;
  std::uint64_t biases_total = 0;
  std::uint64_t batchnorm_total = 0;
  std::uint64_t total = 0;
  std::optional<Comparison> reference;
};

ParamReport count_params(const Graph& graph);
inline ParamReport count_params(const Model& model) {
  model.validate();
  return count_params(model.graph);
}

/// Attach a reference model's totals and the reduction relative to it.
void set_reference(FlopReport& report, const FlopReport& reference, std::string label);
void set_reference(ParamReport& report, const ParamReport& reference, std::string label);

struct LayerMse {
  std::string id;
  Index elements = 0;
  double mse = 0.0;
};

struct MseReport {
  int p = 0;
  std::vector<LayerMse> layers;
};

/// Per-layer mean of (v - w / 2^p)^2 between a float trace and an integer
/// trace of the same layers and shapes, in the float trace's order.
MseReport compare_traces(const InferenceTrace<float>& float_trace, const InferenceTrace<std::int16_t>& int_trace,
                         int p);

nlohmann::ordered_json to_json(const FlopReport& r);
nlohmann::ordered_json to_json(const ParamReport& r);
nlohmann::ordered_json to_json(const MseReport& r);

std::string to_text(const FlopReport& r, bool per_layer);
std::string to_text(const ParamReport& r, bool per_layer);
std::string to_text(const MseReport& r);

/// layer_id,n_elements,mse
std::string to_csv(const MseReport& r);

}  // namespace cnnadapt
