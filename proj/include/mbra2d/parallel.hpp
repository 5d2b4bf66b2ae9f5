// Copyright 2026 The mbra2d Authors
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
#include <exception>
#include <functional>

namespace mbra2d {

// Number of worker threads OpenMP would use by default.
int default_jobs();

// Runs fn(i) for i in [0, n). jobs <= 1 executes the plain serial loop, which
// is the reference path the parallel one is tested against. Work items must
// be independent and write only to their own output slot; exceptions thrown
// by items are captured and the first one is rethrown after the loop joins.
void parallel_for(std::size_t n, int jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace mbra2d
