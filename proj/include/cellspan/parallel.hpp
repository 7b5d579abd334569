#pragma once

#include <cstddef>
#include <exception>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cellspan {

// Execution policy for the per-cell batch kernels. Every parallel kernel has
// a serial twin producing bit-identical results; tests and the benchmark
// target rely on that.
enum class Exec { serial, parallel };

// Worker count for Exec::parallel: OpenMP's max, capped by the
// CELLSPAN_THREADS environment variable when set. 1 without OpenMP.
int effective_threads();

namespace detail {

template <class Fn>
void run_indexed(std::size_t n, Exec exec, Fn&& fn) {
    if (n == 0) return;
#ifdef _OPENMP
    if (exec == Exec::parallel) {
        std::vector<std::exception_ptr> errs(n);
        bool failed = false;
        const int threads = effective_threads();
#pragma omp parallel for schedule(static) num_threads(threads)
        for (long long i = 0; i < static_cast<long long>(n); ++i) {
            try {
                fn(static_cast<std::size_t>(i));
            } catch (...) {
                errs[static_cast<std::size_t>(i)] = std::current_exception();
#pragma omp atomic write
                failed = true;
            }
        }
        if (failed) {
            for (auto& e : errs)
                if (e) std::rethrow_exception(e);
        }
        return;
    }
#else
    (void)exec;
#endif
    for (std::size_t i = 0; i < n; ++i) fn(i);
}

} // namespace detail

// Index-parallel map over [0, n). fn(i) must only touch state owned by
// index i. The first pending exception (lowest index) is rethrown after the
// loop so error reporting is deterministic.
template <class Fn>
void for_each_index(std::size_t n, Exec exec, Fn&& fn) {
    detail::run_indexed(n, exec, std::forward<Fn>(fn));
}

} // namespace cellspan
