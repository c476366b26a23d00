#pragma once

#include <cstddef>
#include <functional>

namespace pancake {

// Worker count used by parallel_for. Defaults to hardware concurrency,
// capped by the PANCAKE_THREADS environment variable when set.
int worker_count();

// Overrides the worker count for the current process (0 = back to default).
void set_worker_count(int n);

// Runs fn(i) for i in [begin, end). Work is split into contiguous chunks,
// one chunk per worker, so any i is executed exactly once. Results must not
// depend on which worker runs which chunk; callers that reduce across
// iterations must do so in index order afterwards.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn);

} // namespace pancake
