#pragma once

#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace grove {

/// Number of workers to actually spawn for a task count.
inline unsigned effective_workers(unsigned requested, std::size_t tasks) {
    if (requested == 0) requested = std::max(1u, std::thread::hardware_concurrency());
    if (tasks < requested) requested = static_cast<unsigned>(tasks);
    return std::max(1u, requested);
}

/// Run fn(i) for i in [0, count) on `workers` threads. Tasks are pulled from a
/// shared atomic counter; fn must make each task independent, which keeps the
/// overall result identical for any worker count. The first exception thrown
/// by any task is rethrown on the caller thread.
template <class Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
    workers = effective_workers(workers, count);
    if (count == 0) return;
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto body = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!error) error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned t = 1; t < workers; ++t) pool.emplace_back(body);
    body();
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace grove
