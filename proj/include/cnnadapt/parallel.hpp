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

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace cnnadapt {

// Number of worker threads used by parallel_for. Reads CNNADAPT_THREADS on
// first use (0 or unset = hardware concurrency) unless overridden.
std::size_t worker_count();

// Overrides the worker count for the whole process; 0 restores the
// environment/auto default.
void set_worker_count(std::size_t n);

// Runs fn(i) for every i in [begin, end), split into contiguous chunks across
// worker_count() threads. Each index is processed exactly once, so results are
// schedule-independent as long as fn(i) only writes data owned by i.
template <typename Fn>
void parallel_for(Eigen::Index begin, Eigen::Index end, Fn&& fn) {
  const Eigen::Index n = end - begin;
  if (n <= 0) return;
  const auto workers =
      static_cast<Eigen::Index>(std::min<std::size_t>(worker_count(), static_cast<std::size_t>(n)));
  if (workers <= 1) {
    for (Eigen::Index i = begin; i < end; ++i) fn(i);
    return;
  }

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> threads;
  threads.reserve(static_cast<std::size_t>(workers));
  const Eigen::Index chunk = (n + workers - 1) / workers;
  for (Eigen::Index lo = begin; lo < end; lo += chunk) {
    const Eigen::Index hi = std::min(end, lo + chunk);
    threads.emplace_back([&, lo, hi] {
      try {
        for (Eigen::Index i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  threads.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace cnnadapt
