#include "clover/parallel.hpp"

#include <cstdlib>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace clover::par {

int default_threads() {
    if (const char* env = std::getenv("CLOVER_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return v;
    }
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

int resolve_threads(int requested) { return requested > 0 ? requested : default_threads(); }

namespace detail {

void run_indexed(std::size_t n, int threads, void* ctx, void (*fn)(void*, std::size_t)) {
    threads = resolve_threads(threads);
    if (threads <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(ctx, i);
        return;
    }
#ifdef _OPENMP
    std::exception_ptr first_error;
    std::size_t first_error_index = n;
    std::mutex err_mutex;
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
    for (long long i = 0; i < static_cast<long long>(n); ++i) {
        try {
            fn(ctx, static_cast<std::size_t>(i));
        } catch (...) {
            std::lock_guard<std::mutex> lk(err_mutex);
            if (static_cast<std::size_t>(i) < first_error_index) {
                first_error_index = static_cast<std::size_t>(i);
                first_error = std::current_exception();
            }
        }
    }
    if (first_error) std::rethrow_exception(first_error);
#else
    for (std::size_t i = 0; i < n; ++i) fn(ctx, i);
#endif
}

}  // namespace detail
}  // namespace clover::par
