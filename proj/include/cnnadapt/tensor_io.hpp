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

#include <filesystem>
#include <variant>

#include "cnnadapt/detail/binary.hpp"
#include "cnnadapt/tensor.hpp"

namespace cnnadapt {

// Tensor container: "TNSR", u32 version, u8 dtype, u8 rank, u32 dims (h, w, c),
// row-major payload; all little-endian.
inline constexpr std::uint32_t kTensorFormatVersion = 1;

using AnyFeatureMap = std::variant<FloatFeatureMap, IntFeatureMap, WideIntFeatureMap>;

template <typename Scalar>
std::vector<std::uint8_t> encode_tensor(const FeatureMap<Scalar>& map);

AnyFeatureMap decode_tensor(std::span<const std::uint8_t> bytes, const std::string& context = "tensor");

template <typename Scalar>
void write_tensor(const std::filesystem::path& path, const FeatureMap<Scalar>& map) {
  detail::atomic_write(path, encode_tensor(map));
}

AnyFeatureMap read_tensor(const std::filesystem::path& path);

/// Reads a tensor and requires its stored dtype to be Scalar.
template <typename Scalar>
FeatureMap<Scalar> read_tensor_as(const std::filesystem::path& path) {
  AnyFeatureMap any = read_tensor(path);
  if (auto* m = std::get_if<FeatureMap<Scalar>>(&any)) return std::move(*m);
  throw IoError(path.string() + ": unexpected tensor dtype");
}

}  // namespace cnnadapt
