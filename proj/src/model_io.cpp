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

#include "cnnadapt/model_io.hpp"

#include <cstdio>

#include "cnnadapt/detail/manifest.hpp"

namespace cnnadapt {
namespace detail {
namespace {

template <typename T>
T field(const Json& obj, const char* key, const std::string& context) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw IoError(context + ": missing field '" + key + "'");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw IoError(context + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T field_or(const Json& obj, const char* key, T fallback, const std::string& context) {
  return obj.contains(key) ? field<T>(obj, key, context) : fallback;
}

Json activation_to_json(const Activation& a) {
  if (a.kind == Activation::Kind::Linear) return Json{{"type", "linear"}};
  return Json{{"type", "leaky"}, {"p_alpha", a.p_alpha}};
}

Activation activation_from_json(const Json& j, const std::string& context) {
  const auto type = field<std::string>(j, "type", context);
  if (type == "linear") return Activation::linear();
  if (type == "leaky") return Activation::leaky(field<int>(j, "p_alpha", context));
  throw ValidationError(context + ": unknown activation '" + type + "'");
}

}  // namespace

Json graph_to_json(const Graph& graph, const EpsilonTable& epsilons) {
  Json layers = Json::array();
  for (const LayerSpec& layer : graph.layers()) {
    Json j;
    j["id"] = layer.id;
    j["kind"] = to_string(layer.kind());
    j["inputs"] = layer.inputs;
    std::visit(
        [&](const auto& a) {
          using A = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<A, InputAttrs>) {
            j["height"] = a.height;
            j["width"] = a.width;
            j["channels"] = a.channels;
          } else if constexpr (std::is_same_v<A, ConvAttrs>) {
            j["num_filters"] = a.num_filters;
            j["kernel_h"] = a.kernel_h;
            j["kernel_w"] = a.kernel_w;
            j["stride"] = a.stride;
            j["padding"] = to_string(a.padding);
            j["has_bias"] = a.has_bias;
            j["has_batchnorm"] = a.has_batchnorm;
            j["fused"] = a.fused;
            j["no_prune"] = a.no_prune;
            j["activation"] = activation_to_json(a.activation);
            if (a.has_batchnorm) j["epsilon"] = epsilons.at(layer.id);
          } else if constexpr (std::is_same_v<A, MaxPoolAttrs>) {
            j["size"] = a.size;
            j["stride"] = a.stride;
          } else if constexpr (std::is_same_v<A, UpsampleAttrs>) {
            j["factor"] = a.factor;
          }
        },
        layer.attrs);
    layers.push_back(std::move(j));
  }
  return layers;
}

Graph graph_from_json(const Json& layers, EpsilonTable* epsilons) {
  if (!layers.is_array()) throw IoError("manifest 'layers' must be an array");
  std::vector<LayerSpec> specs;
  specs.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Json& j = layers[i];
    if (!j.is_object()) throw IoError("manifest layer " + std::to_string(i) + " is not an object");
    LayerSpec spec;
    spec.id = field<std::string>(j, "id", "layer " + std::to_string(i));
    const std::string ctx = "layer '" + spec.id + "'";
    spec.inputs = field<std::vector<std::string>>(j, "inputs", ctx);
    const LayerKind kind = layer_kind_from_string(field<std::string>(j, "kind", ctx));
    switch (kind) {
      case LayerKind::Input:
        if (j.contains("batch")) throw ValidationError(ctx + ": batch dimensions are not supported");
        spec.attrs = InputAttrs{field<Index>(j, "height", ctx), field<Index>(j, "width", ctx),
                                field<Index>(j, "channels", ctx)};
        break;
      case LayerKind::Conv: {
        ConvAttrs a;
        a.num_filters = field<Index>(j, "num_filters", ctx);
        a.kernel_h = field<Index>(j, "kernel_h", ctx);
        a.kernel_w = field<Index>(j, "kernel_w", ctx);
        a.stride = field_or<Index>(j, "stride", 1, ctx);
        a.padding = padding_from_string(field_or<std::string>(j, "padding", "same", ctx));
        a.has_bias = field<bool>(j, "has_bias", ctx);
        a.has_batchnorm = field<bool>(j, "has_batchnorm", ctx);
        a.fused = field_or<bool>(j, "fused", false, ctx);
        a.no_prune = field_or<bool>(j, "no_prune", false, ctx);
        a.activation = j.contains("activation") ? activation_from_json(j["activation"], ctx) : Activation::linear();
        if (a.has_batchnorm && epsilons) {
          (*epsilons)[spec.id] = static_cast<float>(field_or<double>(j, "epsilon", 0.001, ctx));
        }
        spec.attrs = a;
        break;
      }
      case LayerKind::MaxPool:
        spec.attrs = MaxPoolAttrs{field<Index>(j, "size", ctx), field<Index>(j, "stride", ctx)};
        break;
      case LayerKind::Upsample:
        spec.attrs = UpsampleAttrs{field<Index>(j, "factor", ctx)};
        break;
      case LayerKind::Concat:
        spec.attrs = ConcatAttrs{};
        break;
      case LayerKind::OutputMarker:
        spec.attrs = OutputAttrs{};
        break;
    }
    specs.push_back(std::move(spec));
  }
  return Graph(std::move(specs));
}

Json manifest_skeleton(const Graph& graph, const EpsilonTable& epsilons) {
  const auto& in = std::get<InputAttrs>(graph.input().attrs);
  Json m;
  m["format_version"] = kManifestFormatVersion;
  m["input"] = Json{{"h", in.height}, {"w", in.width}, {"c", in.channels}};
  m["layers"] = graph_to_json(graph, epsilons);
  return m;
}

Json read_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return Json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  }
}

Graph graph_from_manifest(const Json& manifest, const std::string& context, EpsilonTable* epsilons) {
  if (!manifest.is_object()) throw IoError(context + ": manifest must be a JSON object");
  const int version = field<int>(manifest, "format_version", context);
  if (version != kManifestFormatVersion) {
    throw IoError(context + ": unsupported manifest format_version " + std::to_string(version));
  }
  Graph graph = graph_from_json(field<Json>(manifest, "layers", context), epsilons);
  const Json input = field<Json>(manifest, "input", context);
  const auto& in = std::get<InputAttrs>(graph.input().attrs);
  if (field<Index>(input, "h", context) != in.height || field<Index>(input, "w", context) != in.width ||
      field<Index>(input, "c", context) != in.channels) {
    throw ValidationError(context + ": top-level input shape disagrees with the input layer");
  }
  return graph;
}

std::string default_weights_name(const std::filesystem::path& manifest_path) {
  return manifest_path.stem().string() + ".weights";
}

std::filesystem::path weights_path_for(const std::filesystem::path& manifest_path, const Json& manifest) {
  const auto rel = field<std::string>(manifest, "weights", manifest_path.string());
  return manifest_path.parent_path() / rel;
}

BlobWriter::BlobWriter() {
  out_.put_bytes("CNNW");
  out_.put(kWeightsFormatVersion);
}

std::map<std::string, BlobRecord> parse_blob(std::span<const std::uint8_t> bytes, const std::string& context) {
  ByteReader r(bytes, context);
  if (r.get_string(4) != "CNNW") throw IoError(context + ": bad magic, expected CNNW");
  const auto version = r.get<std::uint32_t>();
  if (version != kWeightsFormatVersion) {
    throw IoError(context + ": unsupported weights version " + std::to_string(version));
  }
  std::map<std::string, BlobRecord> records;
  std::size_t offset = 8;
  while (!r.at_end()) {
    const auto name = r.get_string(r.get<std::uint16_t>());
    BlobRecord rec;
    rec.dtype = static_cast<DType>(r.get<std::uint8_t>());
    const auto rank = r.get<std::uint8_t>();
    std::size_t count = 1;
    for (int i = 0; i < rank; ++i) {
      rec.dims.push_back(r.get<std::uint32_t>());
      count *= rec.dims.back();
    }
    const std::size_t payload = count * dtype_size(rec.dtype);
    offset = bytes.size() - r.remaining();
    if (r.remaining() < payload) throw IoError(context + ": record '" + name + "' is truncated");
    rec.payload = bytes.subspan(offset, payload);
    r.get_string(payload);
    if (!records.emplace(name, std::move(rec)).second) {
      throw IoError(context + ": duplicate record '" + name + "'");
    }
  }
  return records;
}

std::vector<std::uint32_t> weight_dims(Index kh, Index kw, Index c_in, Index nf) {
  return {static_cast<std::uint32_t>(kh), static_cast<std::uint32_t>(kw), static_cast<std::uint32_t>(c_in),
          static_cast<std::uint32_t>(nf)};
}

std::string fnv1a_hex(std::span<const std::uint8_t> a, std::string_view b) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](std::uint8_t byte) {
    h ^= byte;
    h *= 0x100000001b3ull;
  };
  for (auto byte : a) mix(byte);
  for (char c : b) mix(static_cast<std::uint8_t>(c));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace detail

namespace {

using detail::Json;

struct Encoded {
  Json manifest;
  std::vector<std::uint8_t> blob;
};

Encoded encode(const Model& model, const std::string& weights_name) {
  const ShapeTable shapes = model.validate();
  detail::EpsilonTable eps;
  detail::BlobWriter blob;
  for (const LayerSpec& layer : model.graph.layers()) {
    const ConvAttrs* a = layer.conv();
    if (!a) continue;
    const ConvParams& p = model.params.at(layer.id);
    const auto& f = p.filters;
    blob.add<float>(layer.id + ".W", detail::weight_dims(f.kernel_h(), f.kernel_w(), f.in_channels(), f.num_filters()),
                    std::span(f.weights().data(), static_cast<std::size_t>(f.weights().size())));
    const std::vector<std::uint32_t> vec{static_cast<std::uint32_t>(f.num_filters())};
    if (a->has_bias) blob.add<float>(layer.id + ".b", vec, std::span(f.biases().data(), vec[0]));
    if (p.batchnorm) {
      const BatchNormParams& bn = *p.batchnorm;
      eps[layer.id] = bn.epsilon;
      blob.add<float>(layer.id + ".gamma", vec, std::span(bn.gamma.data(), vec[0]));
      blob.add<float>(layer.id + ".beta", vec, std::span(bn.beta.data(), vec[0]));
      blob.add<float>(layer.id + ".mu", vec, std::span(bn.mu.data(), vec[0]));
      blob.add<float>(layer.id + ".sigma2", vec, std::span(bn.sigma2.data(), vec[0]));
    }
  }
  Json manifest = detail::manifest_skeleton(model.graph, eps);
  manifest["weights"] = weights_name;
  return {std::move(manifest), blob.bytes()};
}

}  // namespace

Model load_model(const std::filesystem::path& manifest_path) {
  const std::string ctx = manifest_path.string();
  const Json manifest = detail::read_manifest(manifest_path);
  if (manifest.is_object() && manifest.contains("quantization")) {
    throw ValidationError(ctx + ": manifest holds a quantized model, not a float model");
  }
  detail::EpsilonTable eps;
  Model model{detail::graph_from_manifest(manifest, ctx, &eps), {}};
  const ShapeTable shapes = shape_infer(model.graph);

  const auto blob_path = detail::weights_path_for(manifest_path, manifest);
  const auto bytes = detail::read_file(blob_path);
  auto records = detail::parse_blob(bytes, blob_path.string());
  for (const LayerSpec& layer : model.graph.layers()) {
    const ConvAttrs* a = layer.conv();
    if (!a) continue;
    const Index c_in = shapes.at(layer.inputs[0]).channels;
    const Index nf = a->num_filters;
    FilterBank<float> f(a->kernel_h, a->kernel_w, c_in, nf);
    const auto w = detail::take_record<float>(records, layer.id, "W", detail::weight_dims(a->kernel_h, a->kernel_w, c_in, nf));
    std::copy(w.begin(), w.end(), f.weights().data());
    const std::vector<std::uint32_t> vec{static_cast<std::uint32_t>(nf)};
    if (a->has_bias) {
      const auto b = detail::take_record<float>(records, layer.id, "b", vec);
      std::copy(b.begin(), b.end(), f.biases().data());
    }
    ConvParams p{std::move(f), std::nullopt};
    if (a->has_batchnorm) {
      BatchNormParams bn(nf);
      bn.epsilon = eps.at(layer.id);
      auto fill = [&](const char* suffix, Eigen::VectorXf& v) {
        const auto values = detail::take_record<float>(records, layer.id, suffix, vec);
        std::copy(values.begin(), values.end(), v.data());
      };
      fill("gamma", bn.gamma);
      fill("beta", bn.beta);
      fill("mu", bn.mu);
      fill("sigma2", bn.sigma2);
      p.batchnorm = std::move(bn);
    }
    model.params.emplace(layer.id, std::move(p));
  }
  if (!records.empty()) {
    throw IoError(ctx + ": weights blob has unexpected record '" + records.begin()->first + "'");
  }
  model.validate();
  return model;
}

void save_model(const Model& model, const std::filesystem::path& manifest_path) {
  const std::string weights_name = detail::default_weights_name(manifest_path);
  const Encoded enc = encode(model, weights_name);
  detail::atomic_write(manifest_path.parent_path() / weights_name, enc.blob);
  detail::atomic_write(manifest_path, enc.manifest.dump(2) + "\n");
}

std::string model_identity(const Model& model) {
  const Encoded enc = encode(model, "");
  return detail::fnv1a_hex(enc.blob, enc.manifest.dump());
}

}  // namespace cnnadapt
