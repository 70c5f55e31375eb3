/*
   Copyright 2026 The mdplab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <cstddef>
#include <functional>

namespace mdplab {

// Worker count used by parallel_for. 0 selects hardware concurrency.
void set_thread_count(std::size_t n);
std::size_t thread_count();

// Runs body(i) for i in [0, n) over contiguous static chunks. Callers write
// results into per-index slots and reduce afterwards in index order, so the
// output never depends on the worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace mdplab
