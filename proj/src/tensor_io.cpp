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

#include "cnnadapt/tensor_io.hpp"

#include <atomic>
#include <fstream>
#include <iterator>

#include <unistd.h>

namespace cnnadapt {

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::Float32:
      return 4;
    case DType::Int16:
      return 2;
    case DType::Int32:
      return 4;
  }
  throw IoError("unknown dtype " + std::to_string(static_cast<int>(t)));
}

namespace detail {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("failed reading " + path.string());
  return bytes;
}

void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at " + path.string());
  }
}

void atomic_write(const std::filesystem::path& path, std::string_view text) {
  atomic_write(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace detail

template <typename Scalar>
std::vector<std::uint8_t> encode_tensor(const FeatureMap<Scalar>& map) {
  detail::ByteWriter w;
  w.put_bytes("TNSR");
  w.put(kTensorFormatVersion);
  w.put(static_cast<std::uint8_t>(dtype_of<Scalar>()));
  w.put(std::uint8_t{3});
  w.put(static_cast<std::uint32_t>(map.height()));
  w.put(static_cast<std::uint32_t>(map.width()));
  w.put(static_cast<std::uint32_t>(map.channels()));
  w.put_all(map.values());
  return w.release();
}

template std::vector<std::uint8_t> encode_tensor(const FeatureMap<float>&);
template std::vector<std::uint8_t> encode_tensor(const FeatureMap<std::int16_t>&);
template std::vector<std::uint8_t> encode_tensor(const FeatureMap<std::int32_t>&);

namespace {

template <typename Scalar>
FeatureMap<Scalar> decode_payload(detail::ByteReader& r, const Shape& shape) {
  FeatureMap<Scalar> map(shape);
  r.get_all(map.values());
  return map;
}

}  // namespace

AnyFeatureMap decode_tensor(std::span<const std::uint8_t> bytes, const std::string& context) {
  detail::ByteReader r(bytes, context);
  if (r.get_string(4) != "TNSR") throw IoError(context + ": bad magic, expected TNSR");
  const auto version = r.get<std::uint32_t>();
  if (version != kTensorFormatVersion) {
    throw IoError(context + ": unsupported tensor format version " + std::to_string(version));
  }
  const auto dtype = static_cast<DType>(r.get<std::uint8_t>());
  const auto rank = r.get<std::uint8_t>();
  if (rank != 3) throw IoError(context + ": feature maps must have rank 3, got " + std::to_string(rank));
  Shape shape;
  shape.height = r.get<std::uint32_t>();
  shape.width = r.get<std::uint32_t>();
  shape.channels = r.get<std::uint32_t>();
  if (shape.height == 0 || shape.width == 0) throw IoError(context + ": zero spatial dimension");
  if (r.remaining() != static_cast<std::size_t>(shape.size()) * dtype_size(dtype)) {
    throw IoError(context + ": payload size does not match dims " + to_string(shape));
  }
  switch (dtype) {
    case DType::Float32:
      return decode_payload<float>(r, shape);
    case DType::Int16:
      return decode_payload<std::int16_t>(r, shape);
    case DType::Int32:
      return decode_payload<std::int32_t>(r, shape);
  }
  throw IoError(context + ": unknown dtype " + std::to_string(static_cast<int>(dtype)));
}

AnyFeatureMap read_tensor(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  return decode_tensor(bytes, path.string());
}

}  // namespace cnnadapt
