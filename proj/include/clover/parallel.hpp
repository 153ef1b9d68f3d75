#pragma once

#include <cstddef>
#include <exception>
#include <vector>

namespace clover::par {

// Number of worker threads to use when a caller passes threads <= 0:
// CLOVER_THREADS if set, otherwise the OpenMP default.
int default_threads();

// Resolve a --threads style request (0 or negative -> default_threads()).
int resolve_threads(int requested);

namespace detail {
void run_indexed(std::size_t n, int threads, void* ctx, void (*fn)(void*, std::size_t));
}

// Apply fn(i) for i in [0, n). threads == 1 runs the plain serial loop (the
// reference path used in tests); threads > 1 runs an OpenMP parallel-for.
// fn must only write to per-index slots; reductions over the results happen
// serially in index order at the call site, so outputs are bitwise identical
// for any thread count. Exceptions are rethrown for the lowest failing index.
template <typename F>
void for_index(std::size_t n, int threads, F&& fn) {
    struct Ctx {
        F* f;
    } ctx{&fn};
    detail::run_indexed(n, threads, &ctx,
                        [](void* c, std::size_t i) { (*static_cast<Ctx*>(c)->f)(i); });
}

}  // namespace clover::par
