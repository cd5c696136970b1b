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

#include <stdexcept>
#include <string>

namespace cnnadapt {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, shape inconsistencies and violated pipeline preconditions.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Unreadable, truncated or malformed files.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Arithmetic that cannot be carried out (e.g. a non-positive variance term).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cnnadapt
