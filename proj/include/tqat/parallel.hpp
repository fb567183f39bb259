// Copyright 2026 The tqat Authors. All Rights Reserved.
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

namespace tqat {

// Worker count for row-parallel kernels. 1 when TQAT_DETERMINISTIC=1,
// otherwise TQAT_THREADS or the hardware concurrency.
std::size_t thread_count();

// Runs fn(begin, end) over contiguous chunks of [0, n). Chunk boundaries
// never change what a single index computes, so results do not depend on
// the worker count.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace tqat
