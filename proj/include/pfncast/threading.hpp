#pragma once

#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace pfncast {

// PFN_THREADS caps worker threads; defaults to the logical core count.
inline int worker_count() {
    static const int n = [] {
        if (const char* env = std::getenv("PFN_THREADS")) {
            int v = std::atoi(env);
            if (v >= 1) return v;
        }
        unsigned hc = std::thread::hardware_concurrency();
        return hc > 0 ? static_cast<int>(hc) : 1;
    }();
    return n;
}

namespace detail {
inline thread_local int parallel_depth = 0;
}

/// Runs body(i) for i in [0, n). Work items must only write to their own
/// output slots; completion order is unspecified but slot-indexed results
/// make the overall computation deterministic. Nested calls run serially.
template <class Body>
void parallel_for(int64_t n, const Body& body) {
    if (n <= 0) return;
    int workers = worker_count();
    if (n == 1 || workers <= 1 || detail::parallel_depth > 0) {
        detail::parallel_depth++;
        try {
            for (int64_t i = 0; i < n; ++i) body(i);
        } catch (...) {
            detail::parallel_depth--;
            throw;
        }
        detail::parallel_depth--;
        return;
    }

    std::atomic<int64_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex err_mu;

    auto run = [&] {
        detail::parallel_depth++;
        for (;;) {
            int64_t i = next.fetch_add(1);
            if (i >= n || failed.load()) break;
            try {
                body(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!first_error) first_error = std::current_exception();
                failed.store(true);
                break;
            }
        }
        detail::parallel_depth--;
    };

    int spawn = static_cast<int>(std::min<int64_t>(workers, n));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(spawn - 1));
    for (int t = 1; t < spawn; ++t) threads.emplace_back(run);
    run();
    for (auto& th : threads) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pfncast
