// Copyright 2026 The FVQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FVQ_PARALLEL_H_
#define FVQ_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace fvq {

// Worker cap from FVQ_THREADS (default 1).
std::size_t configured_threads();

// Runs body(begin, end) over contiguous chunks of [0, n). Only used for work
// whose chunks write disjoint outputs, so results do not depend on the
// thread count.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace fvq

#endif  // FVQ_PARALLEL_H_
