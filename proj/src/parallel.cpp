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

#include "cnnadapt/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace cnnadapt {
namespace {

std::atomic<std::size_t> g_override{0};

std::size_t from_environment() {
  if (const char* env = std::getenv("CNNADAPT_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      // unparseable: fall through to auto
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace

std::size_t worker_count() {
  if (const std::size_t n = g_override.load(); n != 0) return n;
  static const std::size_t from_env = from_environment();
  return from_env;
}

void set_worker_count(std::size_t n) { g_override.store(n); }

}  // namespace cnnadapt
