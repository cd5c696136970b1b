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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "cnnadapt/error.hpp"

namespace cnnadapt {

/// Element type tags shared by the tensor container and the weights blob.
enum class DType : std::uint8_t { Float32 = 0, Int16 = 1, Int32 = 2 };

template <typename Scalar>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<Scalar, float>) {
    return DType::Float32;
  } else if constexpr (std::is_same_v<Scalar, std::int16_t>) {
    return DType::Int16;
  } else {
    static_assert(std::is_same_v<Scalar, std::int32_t>, "unsupported element type");
    return DType::Int32;
  }
}

std::size_t dtype_size(DType t);

namespace detail {

template <typename T>
using UnsignedOf = std::conditional_t<sizeof(T) == 1, std::uint8_t,
                                      std::conditional_t<sizeof(T) == 2, std::uint16_t,
                                                         std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                                            std::uint64_t>>>;

/// Little-endian encoder, independent of host byte order.
class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    auto bits = std::bit_cast<UnsignedOf<T>>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buffer_.push_back(static_cast<std::uint8_t>(bits & 0xFFu));
      if constexpr (sizeof(T) > 1) bits = static_cast<UnsignedOf<T>>(bits >> 8);
    }
  }

  template <typename T>
  void put_all(std::span<const T> values) {
    buffer_.reserve(buffer_.size() + values.size() * sizeof(T));
    for (const T v : values) put(v);
  }

  void put_bytes(std::string_view s) { buffer_.insert(buffer_.end(), s.begin(), s.end()); }

  const std::vector<std::uint8_t>& bytes() const { return buffer_; }
  std::vector<std::uint8_t> release() { return std::move(buffer_); }

 private:
  std::vector<std::uint8_t> buffer_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> data, std::string context)
      : data_(data), context_(std::move(context)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    UnsignedOf<T> bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits = static_cast<UnsignedOf<T>>(bits | (static_cast<UnsignedOf<T>>(data_[pos_ + i]) << (8 * i)));
    }
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }

  template <typename T>
  void get_all(std::span<T> out) {
    need(out.size() * sizeof(T));
    for (T& v : out) v = get<T>();
  }

  std::string get_string(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw IoError(context_ + ": truncated data");
  }

  std::span<const std::uint8_t> data_;
  std::string context_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes to a per-invocation temp file next to `path`, then renames it into
/// place, so readers never observe a partially written file.
void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void atomic_write(const std::filesystem::path& path, std::string_view text);

}  // namespace detail
}  // namespace cnnadapt
