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

#include "cnnadapt/analysis.hpp"

#include <cstdio>
#include <sstream>

namespace cnnadapt {
namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string scientific(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6e", v);
  return buf;
}

std::string pad_left(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }
std::string pad_right(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }

std::string giga(std::uint64_t v) { return fixed(static_cast<double>(v) / 1e9, 3) + " GFLOPs"; }

nlohmann::ordered_json comparison_json(const std::optional<Comparison>& c) {
  if (!c) return nullptr;
  return {{"label", c->label}, {"reference_total", c->reference_total}, {"reduction_percent", c->reduction_percent}};
}

}  // namespace

double reduction_percent(double reference, double value) {
  if (reference == 0.0) return 0.0;
  return 100.0 * (reference - value) / reference;
}

FlopReport count_flops(const Graph& graph) {
  const ShapeTable shapes = shape_infer(graph);
  FlopReport r;
  for (const LayerSpec& layer : graph.layers()) {
    const ConvAttrs* a = layer.conv();
    if (!a) continue;
    const Shape in = shapes.at(layer.inputs[0]);
    const Shape out = shapes.at(layer.id);
    const auto outputs = static_cast<std::uint64_t>(out.height * out.width * out.channels);
    LayerFlops f{layer.id, 2ull * static_cast<std::uint64_t>(a->kernel_h * a->kernel_w * in.channels) * outputs,
                 a->has_batchnorm ? 4ull * outputs : 0ull};
    r.conv_total += f.conv;
    r.batchnorm_total += f.batchnorm;
    r.layers.push_back(std::move(f));
  }
  r.total = r.conv_total + r.batchnorm_total;
  return r;
}

ParamReport count_params(const Graph& graph) {
  const ShapeTable shapes = shape_infer(graph);
  ParamReport r;
  for (const LayerSpec& layer : graph.layers()) {
    const ConvAttrs* a = layer.conv();
    if (!a) continue;
    const Index c_in = shapes.at(layer.inputs[0]).channels;
    const auto nf = static_cast<std::uint64_t>(a->num_filters);
    LayerParams p;
    p.id = layer.id;
    p.weights = static_cast<std::uint64_t>(a->kernel_h * a->kernel_w * c_in) * nf;
    p.biases = a->has_bias ? nf : 0;
    p.batchnorm = a->has_batchnorm ? 4 * nf : 0;
    r.weights_total += p.weights;
    r.biases_total += p.biases;
    r.batchnorm_total += p.batchnorm;
    r.layers.push_back(std::move(p));
  }
  r.total = r.weights_total + r.biases_total + r.batchnorm_total;
  std::uint64_t running = 0;
  for (auto& p : r.layers) {
    running += p.total();
    p.percent = r.total ? 100.0 * static_cast<double>(p.total()) / static_cast<double>(r.total) : 0.0;
    p.cumulative_percent = r.total ? 100.0 * static_cast<double>(running) / static_cast<double>(r.total) : 0.0;
  }
  return r;
}

void set_reference(FlopReport& report, const FlopReport& reference, std::string label) {
  report.reference = Comparison{std::move(label), reference.total,
                                reduction_percent(static_cast<double>(reference.total), static_cast<double>(report.total))};
}

void set_reference(ParamReport& report, const ParamReport& reference, std::string label) {
  report.reference = Comparison{std::move(label), reference.total,
                                reduction_percent(static_cast<double>(reference.total), static_cast<double>(report.total))};
}

MseReport compare_traces(const InferenceTrace<float>& float_trace, const InferenceTrace<std::int16_t>& int_trace,
                         int p) {
  if (p < 0 || p > 30) throw ValidationError("scale exponent out of range");
  if (float_trace.size() != int_trace.size()) {
    throw ValidationError("traces cover different layer sets (" + std::to_string(float_trace.size()) + " vs " +
                          std::to_string(int_trace.size()) + " layers)");
  }
  const double scale = std::ldexp(1.0, p);
  MseReport report{p, {}};
  for (const auto& [id, v] : float_trace) {
    const auto* w = int_trace.find(id);
    if (!w) throw ValidationError("integer trace has no layer '" + id + "'");
    if (w->shape() != v.shape()) {
      throw ValidationError("layer '" + id + "' shape differs: " + to_string(v.shape()) + " vs " + to_string(w->shape()));
    }
    const Index n = v.size();
    double sum = 0.0;
    if (n > 0) {
      sum = (v.pixels().template cast<double>() - w->pixels().template cast<double>() / scale).square().sum();
    }
    report.layers.push_back({id, n, n > 0 ? sum / static_cast<double>(n) : 0.0});
  }
  return report;
}

nlohmann::ordered_json to_json(const FlopReport& r) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"id", l.id}, {"conv_flops", l.conv}, {"batchnorm_flops", l.batchnorm}, {"total", l.total()}});
  }
  return {{"report_version", kReportVersion},
          {"kind", "flops"},
          {"layers", layers},
          {"conv_total", r.conv_total},
          {"batchnorm_total", r.batchnorm_total},
          {"total", r.total},
          {"reference", comparison_json(r.reference)}};
}

nlohmann::ordered_json to_json(const ParamReport& r) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : r.layers) {
    layers.push_back({{"id", l.id},
                      {"weights", l.weights},
                      {"biases", l.biases},
                      {"batchnorm", l.batchnorm},
                      {"total", l.total()},
                      {"percent", l.percent},
                      {"cumulative_percent", l.cumulative_percent}});
  }
  return {{"report_version", kReportVersion},
          {"kind", "params"},
          {"layers", layers},
          {"weights_total", r.weights_total},
          {"biases_total", r.biases_total},
          {"batchnorm_total", r.batchnorm_total},
          {"total", r.total},
          {"reference", comparison_json(r.reference)}};
}

nlohmann::ordered_json to_json(const MseReport& r) {
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& l : r.layers) layers.push_back({{"id", l.id}, {"n_elements", l.elements}, {"mse", l.mse}});
  return {{"report_version", kReportVersion}, {"kind", "mse"}, {"p", r.p}, {"layers", layers}};
}

std::string to_text(const FlopReport& r, bool per_layer) {
  std::ostringstream os;
  if (per_layer) {
    os << pad_right("layer", 12) << pad_left("conv", 16) << pad_left("batchnorm", 14) << pad_left("total", 16) << '\n';
    for (const auto& l : r.layers) {
      os << pad_right(l.id, 12) << pad_left(std::to_string(l.conv), 16) << pad_left(std::to_string(l.batchnorm), 14)
         << pad_left(std::to_string(l.total()), 16) << '\n';
    }
  }
  os << "conv:      " << r.conv_total << " (" << giga(r.conv_total) << ")\n";
  os << "batchnorm: " << r.batchnorm_total << " (" << fixed(static_cast<double>(r.batchnorm_total) / 1e6, 1)
     << " MFLOPs)\n";
  os << "total:     " << r.total << " (" << giga(r.total) << ")\n";
  if (r.reference) {
    os << "reduction vs " << r.reference->label << ": " << fixed(r.reference->reduction_percent, 1) << "%\n";
  }
  return os.str();
}

std::string to_text(const ParamReport& r, bool per_layer) {
  std::ostringstream os;
  if (per_layer) {
    os << pad_right("layer", 12) << pad_left("weights", 12) << pad_left("biases", 9) << pad_left("batchnorm", 11)
       << pad_left("percent", 9) << pad_left("cumulative", 12) << '\n';
    for (const auto& l : r.layers) {
      os << pad_right(l.id, 12) << pad_left(std::to_string(l.weights), 12) << pad_left(std::to_string(l.biases), 9)
         << pad_left(std::to_string(l.batchnorm), 11) << pad_left(fixed(l.percent, 1), 9)
         << pad_left(fixed(l.cumulative_percent, 1), 12) << '\n';
    }
  }
  os << "weights:   " << r.weights_total << '\n';
  os << "biases:    " << r.biases_total << '\n';
  os << "batchnorm: " << r.batchnorm_total << '\n';
  os << "total:     " << r.total << '\n';
  if (r.reference) {
    os << "reduction vs " << r.reference->label << ": " << fixed(r.reference->reduction_percent, 1) << "%\n";
  }
  return os.str();
}

std::string to_text(const MseReport& r) {
  std::ostringstream os;
  os << pad_right("layer", 12) << pad_left("elements", 12) << pad_left("mse", 16) << '\n';
  for (const auto& l : r.layers) {
    os << pad_right(l.id, 12) << pad_left(std::to_string(l.elements), 12) << pad_left(scientific(l.mse), 16) << '\n';
  }
  return os.str();
}

std::string to_csv(const MseReport& r) {
  std::ostringstream os;
  os << "layer_id,n_elements,mse\n";
  for (const auto& l : r.layers) os << l.id << ',' << l.elements << ',' << scientific(l.mse) << '\n';
  return os.str();
}

}  // namespace cnnadapt
