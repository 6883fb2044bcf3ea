// Copyright 2026 The comrp Authors
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

#include <cstddef>
#include <functional>

namespace comrp {

/// Worker count used by every parallel loop in the library. 0 means
/// std::thread::hardware_concurrency(). Results never depend on this value:
/// parallel loops only write to per-index slots and all reductions run
/// serially afterwards.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(i) for i in [0, n), statically partitioned across workers.
/// The first exception thrown by any worker is rethrown on the caller.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace comrp
