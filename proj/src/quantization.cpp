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

#include "cnnadapt/quantization.hpp"

#include <cmath>
#include <limits>

#include "cnnadapt/detail/execute.hpp"
#include "cnnadapt/detail/manifest.hpp"
#include "cnnadapt/model_io.hpp"

namespace cnnadapt {
namespace {

template <typename T>
T saturate(std::int64_t v, std::uint64_t* saturations) {
  constexpr auto lo = static_cast<std::int64_t>(std::numeric_limits<T>::min());
  constexpr auto hi = static_cast<std::int64_t>(std::numeric_limits<T>::max());
  if (v < lo || v > hi) {
    if (saturations) ++*saturations;
    return static_cast<T>(v < lo ? lo : hi);
  }
  return static_cast<T>(v);
}

}  // namespace

void QuantConfig::validate() const {
  if (p < 0 || p > 14) throw ValidationError("scale exponent p must lie in [0, 14]");
  if (p_alpha < 0 || p_alpha > 15) throw ValidationError("p_alpha must lie in [0, 15]");
}

std::int16_t saturate_int16(std::int64_t v, std::uint64_t* saturations) {
  return saturate<std::int16_t>(v, saturations);
}

std::int32_t saturate_int32(std::int64_t v, std::uint64_t* saturations) {
  return saturate<std::int32_t>(v, saturations);
}

std::int16_t quantize_value(double v, int p, std::uint64_t* saturations) {
  if (!std::isfinite(v)) throw NumericError("cannot quantize a non-finite value");
  const double scaled = std::round(std::ldexp(v, p));
  if (scaled > 32767.0 || scaled < -32768.0) {
    if (saturations) ++*saturations;
    return scaled > 0 ? std::numeric_limits<std::int16_t>::max() : std::numeric_limits<std::int16_t>::min();
  }
  return static_cast<std::int16_t>(scaled);
}

ShapeTable QuantizedModel::validate() const {
  config.validate();
  ShapeTable shapes = shape_infer(graph);
  std::size_t convs = 0;
  for (const LayerSpec& layer : graph.layers()) {
    const ConvAttrs* a = layer.conv();
    if (!a) continue;
    ++convs;
    if (a->has_batchnorm) throw ValidationError("quantized conv '" + layer.id + "' carries batchnorm");
    const auto it = params.find(layer.id);
    if (it == params.end()) throw ValidationError("quantized conv '" + layer.id + "' has no parameters");
    const auto& f = it->second;
    if (f.kernel_h() != a->kernel_h || f.kernel_w() != a->kernel_w || f.num_filters() != a->num_filters ||
        f.in_channels() != shapes.at(layer.inputs[0]).channels) {
      throw ValidationError("quantized conv '" + layer.id + "' filter bank does not match the graph");
    }
  }
  if (params.size() != convs) throw ValidationError("parameters stored for a non-conv or unknown layer");
  return shapes;
}

QuantizedModel quantize_model(const Model& model, const QuantConfig& config) {
  config.validate();
  model.validate();
  if (model.has_batchnorm()) throw ValidationError("model contains batchnorm; run fuse first");

  QuantizedModel q{model.graph, {}, config, model_identity(model), 0};
  for (const auto& id : q.graph.conv_ids()) {
    ConvAttrs& a = q.graph.conv_attrs(id);
    if (a.activation.kind == Activation::Kind::Leaky) a.activation.p_alpha = config.p_alpha;
    const FilterBank<float>& f = model.params.at(id).filters;
    FilterBank<std::int16_t> qf(f.kernel_h(), f.kernel_w(), f.in_channels(), f.num_filters());
    for (Index i = 0; i < f.weights().size(); ++i) {
      qf.weights().data()[i] = quantize_value(f.weights().data()[i], config.p, &q.parameter_saturations);
    }
    for (Index n = 0; n < f.num_filters(); ++n) {
      qf.biases()[n] = quantize_value(f.biases()[n], config.p, &q.parameter_saturations);
    }
    q.params.emplace(id, std::move(qf));
  }
  return q;
}

IntFeatureMap quantize_input(const FloatFeatureMap& input, const QuantConfig& config, std::uint64_t* saturations) {
  config.validate();
  IntFeatureMap out(input.shape());
  auto src = input.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = quantize_value(src[i], config.p, saturations);
  return out;
}

FloatFeatureMap dequantize(const IntFeatureMap& map, int p) {
  return FloatFeatureMap(map.shape(), (map.pixels().cast<double>() / std::ldexp(1.0, p)).cast<float>());
}

std::uint64_t OverflowStats::total() const {
  std::uint64_t n = 0;
  for (const auto& [id, l] : layers) n += l.accumulator_saturations + l.int16_saturations;
  return n;
}

nlohmann::ordered_json to_json(const OverflowStats& stats) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::object();
  for (const auto& [id, l] : stats.layers) {
    layers[id] = {{"accumulator_saturations", l.accumulator_saturations}, {"int16_saturations", l.int16_saturations}};
  }
  return {{"report_version", 1}, {"kind", "overflow"}, {"total", stats.total()}, {"layers", layers}};
}

IntFeatureMap int_conv_forward(const IntFeatureMap& input, const FilterBank<std::int16_t>& filters, Index stride,
                               Padding padding, const QuantConfig& config, LayerOverflow* stats) {
  config.validate();
  // |x*w| <= 2^30, so partial sums below 2^53 are exact integers in double, which vectorizes better than int64
  const bool exact_in_double = filters.taps() < (Index{1} << 23);
  const FeatureMap<std::int64_t> sums =
      exact_in_double ? accumulate_conv<double>(input, filters, stride, padding).cast<std::int64_t>()
                      : accumulate_conv<std::int64_t>(input, filters, stride, padding);
  IntFeatureMap out(sums.shape());
  LayerOverflow local;
  const Index nf = filters.num_filters();
  const auto acc = sums.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < acc.size(); ++i) {
    const std::int32_t wide = saturate_int32(acc[i], &local.accumulator_saturations);
    const std::int16_t shifted = saturate_int16(rshift(wide, config.p), &local.int16_saturations);
    const std::int16_t bias = filters.biases()[static_cast<Index>(i) % nf];
    dst[i] = saturate_int16(std::int64_t{shifted} + bias, &local.int16_saturations);
  }
  if (stats) {
    stats->accumulator_saturations += local.accumulator_saturations;
    stats->int16_saturations += local.int16_saturations;
  }
  return out;
}

IntFeatureMap quant_leaky_relu(const IntFeatureMap& z, int p_alpha) {
  if (p_alpha < 0) throw ValidationError("p_alpha must be non-negative");
  IntFeatureMap out(z.shape());
  auto src = z.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = src[i] > 0 ? src[i] : static_cast<std::int16_t>(rshift(src[i], p_alpha));
  }
  return out;
}

IntInference int_infer(const QuantizedModel& model, const IntFeatureMap& input, bool taps) {
  const ShapeTable shapes = model.validate();
  OverflowStats overflow;
  auto trace = detail::execute_graph(model.graph, shapes, input, taps, [&](const LayerSpec& layer, const IntFeatureMap& x) {
    const ConvAttrs& a = *layer.conv();
    LayerOverflow& stats = overflow.layers[layer.id];
    IntFeatureMap z = int_conv_forward(x, model.params.at(layer.id), a.stride, a.padding, model.config, &stats);
    if (a.activation.kind == Activation::Kind::Leaky) z = quant_leaky_relu(z, a.activation.p_alpha);
    return z;
  });
  return {std::move(trace), std::move(overflow)};
}

bool is_quantized_manifest(const std::filesystem::path& manifest_path) {
  const auto m = detail::read_manifest(manifest_path);
  return m.is_object() && m.contains("quantization");
}

void save_quantized_model(const QuantizedModel& model, const std::filesystem::path& manifest_path) {
  model.validate();
  detail::BlobWriter blob;
  for (const LayerSpec& layer : model.graph.layers()) {
    const ConvAttrs* a = layer.conv();
    if (!a) continue;
    const auto& f = model.params.at(layer.id);
    blob.add<std::int16_t>(layer.id + ".W",
                           detail::weight_dims(f.kernel_h(), f.kernel_w(), f.in_channels(), f.num_filters()),
                           std::span(f.weights().data(), static_cast<std::size_t>(f.weights().size())));
    if (a->has_bias) {
      blob.add<std::int16_t>(layer.id + ".b", {static_cast<std::uint32_t>(f.num_filters())},
                             std::span(f.biases().data(), static_cast<std::size_t>(f.num_filters())));
    }
  }
  const std::string weights_name = detail::default_weights_name(manifest_path);
  auto manifest = detail::manifest_skeleton(model.graph, {});
  manifest["weights"] = weights_name;
  manifest["quantization"] = {{"P", model.config.p},
                              {"P_alpha", model.config.p_alpha},
                              {"source_hash", model.source_identity},
                              {"parameter_saturations", model.parameter_saturations}};
  detail::atomic_write(manifest_path.parent_path() / weights_name, blob.bytes());
  detail::atomic_write(manifest_path, manifest.dump(2) + "\n");
}

QuantizedModel load_quantized_model(const std::filesystem::path& manifest_path) {
  const std::string ctx = manifest_path.string();
  const auto manifest = detail::read_manifest(manifest_path);
  if (!manifest.is_object() || !manifest.contains("quantization")) {
    throw ValidationError(ctx + ": not a quantized model (no quantization block); run quantize first");
  }
  QuantizedModel q;
  q.graph = detail::graph_from_manifest(manifest, ctx, nullptr);
  try {
    const auto& block = manifest.at("quantization");
    q.config.p = block.at("P").get<int>();
    q.config.p_alpha = block.at("P_alpha").get<int>();
    q.source_identity = block.value("source_hash", std::string{});
    q.parameter_saturations = block.value("parameter_saturations", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw IoError(ctx + ": malformed quantization block: " + e.what());
  }
  const ShapeTable shapes = shape_infer(q.graph);
  const auto blob_path = detail::weights_path_for(manifest_path, manifest);
  const auto bytes = detail::read_file(blob_path);
  auto records = detail::parse_blob(bytes, blob_path.string());
  for (const LayerSpec& layer : q.graph.layers()) {
    const ConvAttrs* a = layer.conv();
    if (!a) continue;
    const Index c_in = shapes.at(layer.inputs[0]).channels;
    FilterBank<std::int16_t> f(a->kernel_h, a->kernel_w, c_in, a->num_filters);
    const auto w = detail::take_record<std::int16_t>(records, layer.id, "W",
                                                     detail::weight_dims(a->kernel_h, a->kernel_w, c_in, a->num_filters));
    std::copy(w.begin(), w.end(), f.weights().data());
    if (a->has_bias) {
      const auto b =
          detail::take_record<std::int16_t>(records, layer.id, "b", {static_cast<std::uint32_t>(a->num_filters)});
      std::copy(b.begin(), b.end(), f.biases().data());
    }
    q.params.emplace(layer.id, std::move(f));
  }
  if (!records.empty()) {
    throw ValidationError(ctx + ": weights blob has unexpected record '" + records.begin()->first + "'");
  }
  q.validate();
  return q;
}

}  // namespace cnnadapt
