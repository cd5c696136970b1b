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
#include <string>

#include "cnnadapt/model.hpp"

namespace cnnadapt {

inline constexpr int kManifestFormatVersion = 1;
inline constexpr std::uint32_t kWeightsFormatVersion = 1;

/// Reads a JSON manifest and the weights blob it names (path relative to the
/// manifest). Malformed files raise IoError; structural problems (unknown
/// kinds, duplicate ids, missing or mis-shaped records) raise ValidationError.
Model load_model(const std::filesystem::path& manifest_path);

/// Writes `<manifest>` and its weights blob (default `<stem>.weights` next to
/// it). Both files are written atomically, blob first.
void save_model(const Model& model, const std::filesystem::path& manifest_path);

/// Stable 64-bit FNV-1a digest of the serialized model, as hex.
std::string model_identity(const Model& model);

}  // namespace cnnadapt
