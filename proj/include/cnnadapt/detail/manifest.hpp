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

// Manifest and weights-blob plumbing shared by the float and quantized model
// file formats.

#include <json.hpp>

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cnnadapt/detail/binary.hpp"
#include "cnnadapt/model.hpp"

namespace cnnadapt::detail {

using Json = nlohmann::ordered_json;

/// Epsilon per batchnorm conv, keyed by layer id.
using EpsilonTable = std::map<std::string, float>;

Json graph_to_json(const Graph& graph, const EpsilonTable& epsilons);
Graph graph_from_json(const Json& layers, EpsilonTable* epsilons);

/// Manifest skeleton with format_version, input and layers filled in.
Json manifest_skeleton(const Graph& graph, const EpsilonTable& epsilons);

/// Parses the manifest file and its graph; returns the parsed json so callers
/// can read their own extra blocks.
Json read_manifest(const std::filesystem::path& path);
Graph graph_from_manifest(const Json& manifest, const std::string& context, EpsilonTable* epsilons);

std::filesystem::path weights_path_for(const std::filesystem::path& manifest_path, const Json& manifest);
std::string default_weights_name(const std::filesystem::path& manifest_path);

struct BlobRecord {
  DType dtype = DType::Float32;
  std::vector<std::uint32_t> dims;
  std::span<const std::uint8_t> payload;
};

class BlobWriter {
 public:
  BlobWriter();

  template <typename T>
  void add(const std::string& name, const std::vector<std::uint32_t>& dims, std::span<const T> values) {
    out_.put(static_cast<std::uint16_t>(name.size()));
    out_.put_bytes(name);
    out_.put(static_cast<std::uint8_t>(dtype_of<T>()));
    out_.put(static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) out_.put(d);
    out_.put_all(values);
  }

  const std::vector<std::uint8_t>& bytes() const { return out_.bytes(); }

 private:
  ByteWriter out_;
};

/// Splits a blob into named records; payload spans point into `bytes`.
std::map<std::string, BlobRecord> parse_blob(std::span<const std::uint8_t> bytes, const std::string& context);

/// Fetches `<layer>.<suffix>`, checks dtype and dims, and decodes it.
template <typename T>
std::vector<T> take_record(std::map<std::string, BlobRecord>& records, const std::string& layer,
                           const std::string& suffix, const std::vector<std::uint32_t>& dims) {
  const std::string name = layer + "." + suffix;
  const auto it = records.find(name);
  if (it == records.end()) {
    throw IoError("layer '" + layer + "': weights blob has no record '" + name + "'");
  }
  const BlobRecord& rec = it->second;
  if (rec.dtype != dtype_of<T>()) throw IoError("record '" + name + "' has the wrong dtype");
  if (rec.dims != dims) throw IoError("record '" + name + "' shape does not match the manifest");
  std::vector<T> values(rec.payload.size() / sizeof(T));
  ByteReader r(rec.payload, name);
  r.get_all(std::span<T>(values));
  records.erase(it);
  return values;
}

std::vector<std::uint32_t> weight_dims(Index kh, Index kw, Index c_in, Index nf);

std::string fnv1a_hex(std::span<const std::uint8_t> a, std::string_view b);

}  // namespace cnnadapt::detail
