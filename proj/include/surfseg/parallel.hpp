// Copyright 2026 The surfseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace surfseg {

// Process-wide cap on worker threads (>= 1). 1 selects the reference path.
void set_max_threads(int threads);
int max_threads();

// Splits [begin, end) into contiguous chunks and runs `fn(chunk_begin,
// chunk_end)` on up to max_threads() threads. Chunk boundaries depend only on
// the range and `grain`, never on the thread count, so callers that write
// disjoint outputs get identical results for any thread count.
void parallel_for(std::size_t begin, std::size_t end, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace surfseg
